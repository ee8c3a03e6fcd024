//! Layer-wise training on the dual objective.
//!
//! Given per-layer targets y_{l,t}, each layer's weights solve
//!
//! ```text
//! min_θ Σ_t ω_{l,t} [ g_l(A_{l,t}θ) − ⟨A_{l,t}θ, y_{l,t}⟩ ],
//!       g_l = (½‖·‖² + f_l)*,   ∇g_l = r_l,
//! ```
//!
//! whose gradient is the variational-inequality operator
//! F(θ) = Σ_t ω_{l,t} A†_{l,t}[r_l(A_{l,t}θ) − y_{l,t}]. The update
//! θ ← θ − (γ/(2‖A_{l,t}‖²)) A†_{l,t}[r_l(A_{l,t}θ) − y_{l,t}] is applied
//! per sample and combined convexly with the ω weights when one θ is shared
//! across samples, so each step stays inside the averaged-operator calculus.
//! Layers are swept in order within an epoch (layer l's inputs come from the
//! current upstream parameters).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::{conjugate_value, potential_for_kind, ActivationSpec, Arity};
use crate::error::{Error, Result};
use crate::linalg::{dist, Matrix, Vector};
use crate::rng;

/// One data point: input, final-layer target, optional per-layer targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    #[serde(rename = "y_L")]
    pub y_final: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_layers: Option<Vec<Vec<f64>>>,
}

impl Sample {
    pub fn input(&self) -> Vector {
        Array1::from_vec(self.x.clone())
    }

    pub fn final_target(&self) -> Vector {
        Array1::from_vec(self.y_final.clone())
    }
}

/// Architecture of one trainable layer (weights free, activation fixed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerTemplate {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: ActivationSpec,
}

impl LayerTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.activation.arity() == Arity::Reducing {
            return Err(Error::Precondition(
                "reducing activations are not trainable layer heads".into(),
            ));
        }
        Ok(())
    }
}

/// The training problem: samples, per-layer sample weights, architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingProblem {
    pub samples: Vec<Sample>,
    /// omega[l][t] > 0, Σ_t omega[l][t] = 1.
    pub omega: Vec<Vec<f64>>,
    pub template: Vec<LayerTemplate>,
}

impl TrainingProblem {
    /// Build with explicit ω, or uniform 1/T when `omega` is `None`
    /// (recorded by the caller in run warnings).
    pub fn new(
        samples: Vec<Sample>,
        template: Vec<LayerTemplate>,
        omega: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("training samples"));
        }
        if template.is_empty() {
            return Err(Error::Empty("layer templates"));
        }
        for lt in &template {
            lt.validate()?;
        }
        for w in template.windows(2) {
            if w[0].output_dim != w[1].input_dim {
                return Err(Error::dim(w[0].output_dim, w[1].input_dim, "template chain"));
            }
        }
        let t_count = samples.len();
        let omega = match omega {
            Some(om) => {
                if om.len() != template.len() {
                    return Err(Error::dim(template.len(), om.len(), "omega per layer"));
                }
                for row in &om {
                    if row.len() != t_count {
                        return Err(Error::dim(t_count, row.len(), "omega per sample"));
                    }
                    let sum: f64 = row.iter().sum();
                    let min = row.iter().cloned().fold(f64::MAX, f64::min);
                    if min <= 0.0 || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidWeights { sum, min });
                    }
                }
                om
            }
            None => vec![vec![1.0 / t_count as f64; t_count]; template.len()],
        };
        for s in &samples {
            if s.x.len() != template[0].input_dim {
                return Err(Error::dim(template[0].input_dim, s.x.len(), "sample input"));
            }
            if s.y_final.len() != template.last().unwrap().output_dim {
                return Err(Error::dim(
                    template.last().unwrap().output_dim,
                    s.y_final.len(),
                    "sample final target",
                ));
            }
        }
        Ok(TrainingProblem { samples, omega, template })
    }

    pub fn layer_count(&self) -> usize {
        self.template.len()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }
}

/// Weights and bias of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Theta {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Theta { weight: Array2::zeros((out_dim, in_dim)), bias: Array1::zeros(out_dim) }
    }

    pub fn dot(&self, other: &Theta) -> f64 {
        let w: f64 = self.weight.iter().zip(other.weight.iter()).map(|(a, b)| a * b).sum();
        let b: f64 = self.bias.iter().zip(other.bias.iter()).map(|(a, b)| a * b).sum();
        w + b
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Theta) {
        self.weight.zip_mut_with(&other.weight, |a, b| *a += alpha * b);
        self.bias.zip_mut_with(&other.bias, |a, b| *a += alpha * b);
    }
}

/// The affine lift A: (W, b) ↦ Wx + b for a fixed layer input x, with its
/// adjoint z ↦ (z xᵀ, z) and exact operator norm √(‖x‖² + 1).
#[derive(Debug, Clone)]
pub struct AffineLift {
    pub x: Vector,
}

impl AffineLift {
    pub fn new(x: Vector) -> Self {
        AffineLift { x }
    }

    pub fn apply(&self, theta: &Theta) -> Vector {
        theta.weight.dot(&self.x) + &theta.bias
    }

    pub fn adjoint(&self, z: &Vector) -> Theta {
        let out = z.len();
        let inner = self.x.len();
        let mut w = Array2::zeros((out, inner));
        for i in 0..out {
            for j in 0..inner {
                w[[i, j]] = z[i] * self.x[j];
            }
        }
        Theta { weight: w, bias: z.clone() }
    }

    /// Each output coordinate is an independent functional of norm
    /// √(‖x‖² + 1); that is the lift's exact operator norm.
    pub fn operator_norm(&self) -> f64 {
        (self.x.dot(&self.x) + 1.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetProvenance {
    Given,
    TeacherGenerated,
}

/// Per-layer targets y_{l,t}, materialized from data or a teacher network.
#[derive(Debug, Clone)]
pub struct Targets {
    /// per_layer[l][t]
    pub per_layer: Vec<Vec<Vector>>,
    pub provenance: TargetProvenance,
}

/// Resolve per-layer targets. Priority: explicit `y_layers` in the data,
/// then a teacher's forward pass, then — only for single-layer problems —
/// the final targets themselves. Anything else is an explicit gap.
pub fn layer_targets(
    problem: &TrainingProblem,
    teacher: Option<&crate::network::NetworkSpec>,
) -> Result<Targets> {
    let layer_count = problem.layer_count();
    let all_given = problem.samples.iter().all(|s| s.y_layers.is_some());
    if all_given {
        let mut per_layer = vec![Vec::with_capacity(problem.sample_count()); layer_count];
        for s in &problem.samples {
            let ys = s.y_layers.as_ref().unwrap();
            if ys.len() != layer_count {
                return Err(Error::dim(layer_count, ys.len(), "per-layer targets"));
            }
            for (l, y) in ys.iter().enumerate() {
                if y.len() != problem.template[l].output_dim {
                    return Err(Error::dim(problem.template[l].output_dim, y.len(), format!("target of layer {l}")));
                }
                per_layer[l].push(Array1::from_vec(y.clone()));
            }
        }
        return Ok(Targets { per_layer, provenance: TargetProvenance::Given });
    }
    if let Some(teacher) = teacher {
        let mut per_layer = vec![Vec::with_capacity(problem.sample_count()); layer_count];
        for s in &problem.samples {
            let ys = teacher.forward(&s.input())?;
            if ys.len() != layer_count {
                return Err(Error::dim(layer_count, ys.len(), "teacher depth"));
            }
            for (l, y) in ys.into_iter().enumerate() {
                per_layer[l].push(y);
            }
        }
        return Ok(Targets { per_layer, provenance: TargetProvenance::TeacherGenerated });
    }
    if layer_count == 1 {
        let per_layer = vec![problem.samples.iter().map(|s| s.final_target()).collect()];
        return Ok(Targets { per_layer, provenance: TargetProvenance::Given });
    }
    Err(Error::Precondition(
        "final-layer-only data with no teacher: per-layer targets y_{l,t} cannot be materialized; \
         supply y_layers in the dataset or a teacher network"
            .into(),
    ))
}

/// The paper-form update for a single (layer, sample) pair:
/// θ' = θ − (γ/(2‖A‖²)) A†[r(Aθ) − y].
pub fn gd_step_single(
    theta: &Theta,
    lift: &AffineLift,
    target: &Vector,
    activation: &ActivationSpec,
    gamma: f64,
) -> Result<Theta> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Precondition(format!("gd step needs 0 < gamma < 1, got {gamma}")));
    }
    let a_norm = lift.operator_norm();
    if a_norm <= 0.0 {
        return Err(Error::Precondition("affine lift has zero norm".into()));
    }
    let residual = activation.apply(&lift.apply(theta)) - target;
    let grad = lift.adjoint(&residual);
    let mut out = theta.clone();
    out.axpy(-gamma / (2.0 * a_norm * a_norm), &grad);
    Ok(out)
}

/// One shared-θ step for a layer: the ω-weighted convex combination of the
/// per-sample updates. Returns the new θ and the VI operator norm at the
/// starting point.
pub fn gd_step_shared(
    theta: &Theta,
    lifts: &[AffineLift],
    targets: &[Vector],
    omega: &[f64],
    activation: &ActivationSpec,
    gamma: f64,
) -> Result<(Theta, f64)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Precondition(format!("gd step needs 0 < gamma < 1, got {gamma}")));
    }
    let mut out = theta.clone();
    let mut vi = Theta::zeros(theta.weight.nrows(), theta.weight.ncols());
    for ((lift, target), &w) in lifts.iter().zip(targets).zip(omega) {
        let a_norm = lift.operator_norm();
        let residual = activation.apply(&lift.apply(theta)) - target;
        let grad = lift.adjoint(&residual);
        vi.axpy(w, &grad);
        out.axpy(-w * gamma / (2.0 * a_norm * a_norm), &grad);
    }
    Ok((out, vi.norm()))
}

/// ‖Σ_t ω_{l,t} A†_{l,t}[r_l(A_{l,t}θ) − y_{l,t}]‖ — the norm of the VI
/// operator for one layer at the given θ and inputs.
pub fn vi_operator_norm(
    theta: &Theta,
    lifts: &[AffineLift],
    targets: &[Vector],
    omega: &[f64],
    activation: &ActivationSpec,
) -> Theta {
    let mut vi = Theta::zeros(theta.weight.nrows(), theta.weight.ncols());
    for ((lift, target), &w) in lifts.iter().zip(targets).zip(omega) {
        let residual = activation.apply(&lift.apply(theta)) - target;
        vi.axpy(w, &lift.adjoint(&residual));
    }
    vi
}

/// Layer inputs x_{l−1,t} under the current parameters (layer 0 reads the
/// data; deeper layers read the student's forward pass).
fn layer_inputs(problem: &TrainingProblem, thetas: &[Theta], layer: usize) -> Vec<Vector> {
    problem
        .samples
        .iter()
        .map(|s| {
            let mut cur = s.input();
            for l in 0..layer {
                let lift = AffineLift::new(cur);
                cur = problem.template[l].activation.apply(&lift.apply(&thetas[l]));
            }
            cur
        })
        .collect()
}

/// VI residual of one layer at the current parameter stack.
pub fn vi_residual(
    problem: &TrainingProblem,
    targets: &Targets,
    thetas: &[Theta],
    layer: usize,
) -> Result<f64> {
    if layer >= problem.layer_count() {
        return Err(Error::Precondition(format!("layer {layer} out of range")));
    }
    let inputs = layer_inputs(problem, thetas, layer);
    let lifts: Vec<AffineLift> = inputs.into_iter().map(AffineLift::new).collect();
    let vi = vi_operator_norm(
        &thetas[layer],
        &lifts,
        &targets.per_layer[layer],
        &problem.omega[layer],
        &problem.template[layer].activation,
    );
    Ok(vi.norm())
}

/// Sampled directional form of the variational inequality at θ:
/// min over random directions d of ⟨F(θ), d⟩ / ‖d‖ (≥ −tol certifies the
/// inequality on the sample).
pub fn vi_directional_min(
    problem: &TrainingProblem,
    targets: &Targets,
    thetas: &[Theta],
    layer: usize,
    directions: usize,
    seed: u64,
) -> Result<f64> {
    let inputs = layer_inputs(problem, thetas, layer);
    let lifts: Vec<AffineLift> = inputs.into_iter().map(AffineLift::new).collect();
    let vi = vi_operator_norm(
        &thetas[layer],
        &lifts,
        &targets.per_layer[layer],
        &problem.omega[layer],
        &problem.template[layer].activation,
    );
    let mut rng = rng::stream(seed, "training.vi_directions");
    let mut min_value = f64::INFINITY;
    let (rows, cols) = vi.weight.dim();
    for _ in 0..directions {
        let dir = Theta {
            weight: Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal)),
            bias: Array1::from_shape_fn(vi.bias.len(), |_| rng.sample::<f64, _>(StandardNormal)),
        };
        let n = dir.norm();
        if n > 0.0 {
            min_value = min_value.min(vi.dot(&dir) / n);
        }
    }
    Ok(min_value)
}

/// Dual objective Σ_t ω_t [g(A_tθ) − ⟨A_tθ, y_t⟩] for layers whose
/// potential is known in closed form; `None`-like error otherwise.
/// g is evaluated by the numeric Legendre–Fenchel transform, coordinatewise.
pub fn dual_objective(
    theta: &Theta,
    lifts: &[AffineLift],
    targets: &[Vector],
    omega: &[f64],
    activation: &ActivationSpec,
) -> Result<f64> {
    let f = potential_for_kind(&activation.kind).ok_or_else(|| {
        Error::Precondition(format!(
            "dual objective unavailable: no closed-form potential for {}",
            activation.kind.name()
        ))
    })?;
    let mut total = 0.0;
    for ((lift, y), &w) in lifts.iter().zip(targets).zip(omega) {
        let v = lift.apply(theta);
        let mut g_sum = 0.0;
        for &vi in v.iter() {
            g_sum += conjugate_value(&f, vi);
        }
        total += w * (g_sum - v.dot(y));
    }
    Ok(total)
}

/// Euclidean gradient of [`dual_objective`] in closed form:
/// Σ_t ω_t A†[r(A_tθ) − y_t].
pub fn dual_gradient(
    theta: &Theta,
    lifts: &[AffineLift],
    targets: &[Vector],
    omega: &[f64],
    activation: &ActivationSpec,
) -> Theta {
    vi_operator_norm(theta, lifts, targets, omega, activation)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainState {
    pub theta: Theta,
    pub steps: usize,
    /// Dual objective per step where the potential is known (empty
    /// otherwise); length steps + 1 including the starting point.
    pub objective_history: Vec<f64>,
    /// VI operator norm per step; length steps + 1.
    pub grad_norm_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub states: Vec<TrainState>,
    pub epochs: usize,
    pub per_layer_vi_residual: Vec<f64>,
    /// max_t ‖student(x_t) − y_{L,t}‖ at the end of training.
    pub output_error: f64,
    pub exact_fit: bool,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub gamma: f64,
    pub tol: f64,
    pub max_epochs: usize,
    /// Threshold for declaring the final outputs an exact fit.
    pub fit_tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { gamma: 0.5, tol: 1e-8, max_epochs: 100_000, fit_tol: 1e-5 }
    }
}

/// Train all layers by epoch sweeps. Layer l = 1…L takes one shared-θ step
/// per epoch against its targets, reading inputs from the current upstream
/// parameters. Stops when every layer's VI residual is within `tol`.
pub fn train(
    problem: &TrainingProblem,
    teacher: Option<&crate::network::NetworkSpec>,
    options: &TrainOptions,
    omega_defaulted: bool,
) -> Result<TrainReport> {
    let targets = layer_targets(problem, teacher)?;
    let layer_count = problem.layer_count();
    let mut warnings = Vec::new();
    if omega_defaulted {
        warnings.push("omega weights defaulted to uniform 1/T".to_string());
    }
    if targets.provenance == TargetProvenance::TeacherGenerated {
        warnings.push("per-layer targets generated by teacher forward pass".to_string());
    }
    let mut thetas: Vec<Theta> = problem
        .template
        .iter()
        .map(|lt| Theta::zeros(lt.output_dim, lt.input_dim))
        .collect();
    let mut states: Vec<TrainState> = Vec::with_capacity(layer_count);
    let dual_supported: Vec<bool> = problem
        .template
        .iter()
        .map(|lt| potential_for_kind(&lt.activation.kind).is_some())
        .collect();
    for l in 0..layer_count {
        let inputs = layer_inputs(problem, &thetas, l);
        let lifts: Vec<AffineLift> = inputs.into_iter().map(AffineLift::new).collect();
        let grad0 = vi_operator_norm(
            &thetas[l],
            &lifts,
            &targets.per_layer[l],
            &problem.omega[l],
            &problem.template[l].activation,
        )
        .norm();
        let obj0 = if dual_supported[l] {
            vec![dual_objective(
                &thetas[l],
                &lifts,
                &targets.per_layer[l],
                &problem.omega[l],
                &problem.template[l].activation,
            )?]
        } else {
            Vec::new()
        };
        states.push(TrainState {
            theta: thetas[l].clone(),
            steps: 0,
            objective_history: obj0,
            grad_norm_history: vec![grad0],
        });
    }

    let mut epochs = 0;
    let mut converged = false;
    for _epoch in 0..options.max_epochs {
        epochs += 1;
        let mut all_done = true;
        for l in 0..layer_count {
            let inputs = layer_inputs(problem, &thetas, l);
            let lifts: Vec<AffineLift> = inputs.into_iter().map(AffineLift::new).collect();
            let (next, grad_norm) = gd_step_shared(
                &thetas[l],
                &lifts,
                &targets.per_layer[l],
                &problem.omega[l],
                &problem.template[l].activation,
                options.gamma,
            )?;
            thetas[l] = next;
            states[l].steps += 1;
            states[l].grad_norm_history.push(grad_norm);
            if dual_supported[l] {
                let obj = dual_objective(
                    &thetas[l],
                    &lifts,
                    &targets.per_layer[l],
                    &problem.omega[l],
                    &problem.template[l].activation,
                )?;
                states[l].objective_history.push(obj);
            }
            if grad_norm > options.tol {
                all_done = false;
            }
        }
        if all_done {
            converged = true;
            break;
        }
    }
    for (l, state) in states.iter_mut().enumerate() {
        state.theta = thetas[l].clone();
    }

    let per_layer_vi_residual: Vec<f64> = (0..layer_count)
        .map(|l| vi_residual(problem, &targets, &thetas, l))
        .collect::<Result<Vec<_>>>()?;
    let mut output_error = 0.0_f64;
    for s in &problem.samples {
        let mut cur = s.input();
        for l in 0..layer_count {
            let lift = AffineLift::new(cur);
            cur = problem.template[l].activation.apply(&lift.apply(&thetas[l]));
        }
        output_error = output_error.max(dist(&cur, &s.final_target()));
    }
    let exact_fit = output_error <= options.fit_tol;
    Ok(TrainReport {
        states,
        epochs,
        per_layer_vi_residual,
        output_error,
        exact_fit,
        converged,
        warnings,
    })
}

/// Parse a JSON-lines dataset (`{"x": [...], "y_L": [...], "y_layers": ...}`
/// per line; blank lines skipped).
pub fn parse_jsonl(text: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(line)
            .map_err(|e| Error::InvalidInput(format!("dataset line {}: {e}", ln + 1)))?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{make_activation, ActivationKind};
    use crate::network::{LambdaSchedule, LayerSpec, NetworkSpec};
    use ndarray::array;

    fn sigmoid_spec() -> ActivationSpec {
        make_activation(ActivationKind::Sigmoid).unwrap()
    }

    fn identity_spec() -> ActivationSpec {
        make_activation(ActivationKind::Identity).unwrap()
    }

    #[test]
    fn adjoint_identity_holds_to_machine_precision() {
        let mut rng = crate::rng::stream(5, "test.adjoint");
        for _ in 0..1000 {
            let x = Array1::from_shape_fn(3, |_| rng.sample::<f64, _>(StandardNormal));
            let lift = AffineLift::new(x);
            let theta = Theta {
                weight: Array2::from_shape_fn((2, 3), |_| rng.sample::<f64, _>(StandardNormal)),
                bias: Array1::from_shape_fn(2, |_| rng.sample::<f64, _>(StandardNormal)),
            };
            let z = Array1::from_shape_fn(2, |_| rng.sample::<f64, _>(StandardNormal));
            let lhs = lift.apply(&theta).dot(&z);
            let rhs = theta.dot(&lift.adjoint(&z));
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn lift_norm_closed_form() {
        let lift = AffineLift::new(array![3.0, 4.0]);
        assert!((lift.operator_norm() - 26.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_is_a_fixed_point_of_the_update() {
        // Identity activation, θ already fits: gradient is zero.
        let theta = Theta { weight: array![[2.0]], bias: array![1.0] };
        let lift = AffineLift::new(array![1.5]);
        let y = lift.apply(&theta); // exact target
        let next = gd_step_single(&theta, &lift, &y, &identity_spec(), 0.5).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn single_sample_identity_reaches_least_squares_fit() {
        let problem = TrainingProblem::new(
            vec![Sample { x: vec![1.0], y_final: vec![3.0], y_layers: None }],
            vec![LayerTemplate { input_dim: 1, output_dim: 1, activation: identity_spec() }],
            None,
        )
        .unwrap();
        let report = train(&problem, None, &TrainOptions::default(), true).unwrap();
        assert!(report.converged);
        // residual W + b − 3 must vanish
        let th = &report.states[0].theta;
        assert!((th.weight[[0, 0]] + th.bias[0] - 3.0).abs() < 1e-7);
        assert!(report.exact_fit);
    }

    #[test]
    fn inconsistent_data_leaves_a_residual_floor() {
        // Identical inputs demanding different outputs: no exact fit exists.
        let problem = TrainingProblem::new(
            vec![
                Sample { x: vec![1.0], y_final: vec![0.2], y_layers: None },
                Sample { x: vec![1.0], y_final: vec![0.8], y_layers: None },
            ],
            vec![LayerTemplate { input_dim: 1, output_dim: 1, activation: sigmoid_spec() }],
            None,
        )
        .unwrap();
        let mut opts = TrainOptions::default();
        opts.max_epochs = 20_000;
        let report = train(&problem, None, &opts, true).unwrap();
        assert!(!report.exact_fit);
        assert!(report.output_error > 0.1);
    }

    #[test]
    fn teacher_student_two_sigmoid_layers_exact_fit() {
        let sig = sigmoid_spec();
        let teacher_l1 = LayerSpec::new(array![[1.5]], array![0.3], sig.clone()).unwrap();
        let teacher_l2 = LayerSpec::new(array![[-1.1]], array![0.2], sig.clone()).unwrap();
        let teacher = NetworkSpec::new(
            array![0.0],
            vec![teacher_l1, teacher_l2],
            LambdaSchedule::constant(0.5),
        )
        .unwrap();
        let xs: Vec<f64> = (0..8).map(|i| -2.0 + i as f64 * 0.55).collect();
        let samples: Vec<Sample> = xs
            .iter()
            .map(|&x| {
                let ys = teacher.forward(&array![x]).unwrap();
                Sample { x: vec![x], y_final: ys[1].to_vec(), y_layers: None }
            })
            .collect();
        let problem = TrainingProblem::new(
            samples,
            vec![
                LayerTemplate { input_dim: 1, output_dim: 1, activation: sig.clone() },
                LayerTemplate { input_dim: 1, output_dim: 1, activation: sig },
            ],
            None,
        )
        .unwrap();
        let mut opts = TrainOptions::default();
        opts.tol = 1e-8;
        let report = train(&problem, Some(&teacher), &opts, true).unwrap();
        assert!(report.converged, "epochs {}", report.epochs);
        assert!(report.per_layer_vi_residual.iter().all(|r| *r <= 1e-6));
        assert!(report.output_error <= 1e-5, "output error {}", report.output_error);
    }

    #[test]
    fn sigmoid_objective_decreases_along_the_trajectory() {
        // Single sigmoid layer with teacher-consistent targets: the dual
        // objective is nonincreasing over the first 100 steps.
        let sig = sigmoid_spec();
        let samples: Vec<Sample> = (0..6)
            .map(|i| {
                let x = -2.0 + i as f64 * 0.8;
                let y = 1.0 / (1.0 + (-(0.9 * x - 0.1)).exp());
                Sample { x: vec![x], y_final: vec![y], y_layers: None }
            })
            .collect();
        let problem = TrainingProblem::new(
            samples,
            vec![LayerTemplate { input_dim: 1, output_dim: 1, activation: sig }],
            None,
        )
        .unwrap();
        let opts = TrainOptions { tol: 0.0, max_epochs: 100, ..TrainOptions::default() };
        let report = train(&problem, None, &opts, true).unwrap();
        let hist = &report.states[0].objective_history;
        assert_eq!(hist.len(), 101);
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn step_size_safety_bound() {
        // ‖θ' − θ‖ ≤ (γ/(2‖A‖²))·‖A‖·‖r(Aθ) − y‖ for a single-pair step.
        let sig = sigmoid_spec();
        let mut rng = crate::rng::stream(41, "test.stepsize");
        for _ in 0..50 {
            let lift = AffineLift::new(array![rng.gen_range(-3.0..3.0)]);
            let theta = Theta {
                weight: array![[rng.gen_range(-2.0..2.0)]],
                bias: array![rng.gen_range(-2.0..2.0)],
            };
            let target = array![rng.gen_range(-1.0..1.0)];
            let gamma = 0.5;
            let next = gd_step_single(&theta, &lift, &target, &sig, gamma).unwrap();
            let mut step = next.clone();
            step.axpy(-1.0, &theta);
            let a = lift.operator_norm();
            let resid = {
                let d = sig.apply(&lift.apply(&theta)) - &target;
                d.dot(&d).sqrt()
            };
            let bound = gamma / (2.0 * a * a) * a * resid;
            assert!(step.norm() <= bound + 1e-12, "step {} vs bound {bound}", step.norm());
        }
    }

    #[test]
    fn vi_residual_linear_case_hand_computation() {
        // Identity activation, scalar input x = 1: perturbing an exact fit
        // by δ = (c, c) gives VI operator A†A δ with norm 2‖δ‖.
        let problem = TrainingProblem::new(
            vec![Sample { x: vec![1.0], y_final: vec![3.0], y_layers: None }],
            vec![LayerTemplate { input_dim: 1, output_dim: 1, activation: identity_spec() }],
            None,
        )
        .unwrap();
        let targets = layer_targets(&problem, None).unwrap();
        let exact = vec![Theta { weight: array![[2.0]], bias: array![1.0] }];
        assert!(vi_residual(&problem, &targets, &exact, 0).unwrap() <= 1e-12);

        let c = 0.3;
        let perturbed = vec![Theta { weight: array![[2.0 + c]], bias: array![1.0 + c] }];
        let vi = vi_residual(&problem, &targets, &perturbed, 0).unwrap();
        // A δ = 2c, A†(2c) = (2c, 2c), so ‖F‖ = 2c√2 = 2‖δ‖.
        let expected = 2.0 * std::f64::consts::SQRT_2 * c;
        assert!((vi - expected).abs() < 1e-12, "vi {vi} vs hand value {expected}");

        // δ = 0 → residual 0 exactly.
        assert_eq!(vi_residual(&problem, &targets, &exact, 0).unwrap(), 0.0);
    }

    #[test]
    fn directional_vi_holds_at_the_solution() {
        let sig = sigmoid_spec();
        let samples: Vec<Sample> = (0..5)
            .map(|i| {
                let x = -1.0 + i as f64 * 0.5;
                let y = 1.0 / (1.0 + (-(0.7 * x + 0.2)).exp());
                Sample { x: vec![x], y_final: vec![y], y_layers: None }
            })
            .collect();
        let problem = TrainingProblem::new(
            samples,
            vec![LayerTemplate { input_dim: 1, output_dim: 1, activation: sig }],
            None,
        )
        .unwrap();
        let report = train(&problem, None, &TrainOptions::default(), true).unwrap();
        assert!(report.converged);
        let targets = layer_targets(&problem, None).unwrap();
        let thetas: Vec<Theta> = report.states.iter().map(|s| s.theta.clone()).collect();
        let min_dir =
            vi_directional_min(&problem, &targets, &thetas, 0, 1000, 3).unwrap();
        assert!(min_dir >= -1e-7, "directional VI violated: {min_dir}");
    }

    #[test]
    fn dual_gradient_matches_finite_differences() {
        let sig = sigmoid_spec();
        let mut rng = crate::rng::stream(17, "test.dual_fd");
        let lifts: Vec<AffineLift> = (0..4)
            .map(|_| AffineLift::new(Array1::from_shape_fn(1, |_| rng.gen_range(-2.0..2.0))))
            .collect();
        let targets: Vec<Vector> =
            (0..4).map(|_| array![rng.gen_range(0.1..0.9)]).collect();
        let omega = vec![0.25; 4];
        for _ in 0..10 {
            let theta = Theta {
                weight: array![[rng.gen_range(-1.5..1.5)]],
                bias: array![rng.gen_range(-1.5..1.5)],
            };
            let g = dual_gradient(&theta, &lifts, &targets, &omega, &sig);
            let h = 1e-5;
            let mut fd = Theta::zeros(1, 1);
            for (idx, slot) in [(0, true), (0, false)] {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                if slot {
                    plus.weight[[0, idx]] += h;
                    minus.weight[[0, idx]] -= h;
                } else {
                    plus.bias[idx] += h;
                    minus.bias[idx] -= h;
                }
                let f_plus = dual_objective(&plus, &lifts, &targets, &omega, &sig).unwrap();
                let f_minus = dual_objective(&minus, &lifts, &targets, &omega, &sig).unwrap();
                let d = (f_plus - f_minus) / (2.0 * h);
                if slot {
                    fd.weight[[0, idx]] = d;
                } else {
                    fd.bias[idx] = d;
                }
            }
            assert!((g.weight[[0, 0]] - fd.weight[[0, 0]]).abs() < 1e-4);
            assert!((g.bias[0] - fd.bias[0]).abs() < 1e-4);
        }
    }

    #[test]
    fn final_only_multilayer_without_teacher_is_an_error() {
        let problem = TrainingProblem::new(
            vec![Sample { x: vec![0.1], y_final: vec![0.5], y_layers: None }],
            vec![
                LayerTemplate { input_dim: 1, output_dim: 1, activation: sigmoid_spec() },
                LayerTemplate { input_dim: 1, output_dim: 1, activation: sigmoid_spec() },
            ],
            None,
        )
        .unwrap();
        let err = layer_targets(&problem, None).unwrap_err();
        assert!(err.to_string().contains("teacher"));
    }

    #[test]
    fn jsonl_roundtrip() {
        let text = r#"{"x": [0.5], "y_L": [0.7]}
{"x": [1.0], "y_L": [0.2], "y_layers": [[0.3], [0.2]]}"#;
        let samples = parse_jsonl(text).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].y_layers.as_ref().unwrap().len(), 2);
    }
}
