//! Deep networks as operator compositions, and their fixed-point iteration.
//!
//! A network is a chain of layers x ↦ r(Wx + b) whose composition O maps
//! the input space to itself. The engine runs the relaxed iteration
//!
//! ```text
//! x_{t+1} = x_t + λ_t (O(x_t) − x_t)
//! ```
//!
//! with a relaxation schedule admissible for the composed certificate γ
//! (λ_t ∈ [0, 1/γ], Σ λ_t(1−γλ_t) = ∞), driving the residual ‖O(x_t)−x_t‖
//! to zero. A Banach–Picard contraction mode covers the strict-contraction
//! regime max‖W_l‖ < 1, where the convergence rate is linear and checked
//! step by step. `fejer_check` validates the monotone approach to a fixed
//! point and its telescoping bound along any certified trace.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSpec;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist, matrix_finite, operator_norm, Matrix, Vector};
use crate::operator::{compose, AveragedOperator, GammaCertificate};

/// One layer: x ↦ activation(Wx + b).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: ActivationSpec,
}

impl LayerSpec {
    pub fn new(weight: Matrix, bias: Vector, activation: ActivationSpec) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::dim(weight.nrows(), bias.len(), "layer bias length"));
        }
        if !matrix_finite(&weight) || !all_finite(&bias) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(LayerSpec { weight, bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.activation.kind.output_dim(self.weight.nrows())
    }

    /// Pre-activation a = Wx + b.
    pub fn affine(&self, x: &Vector) -> Vector {
        self.weight.dot(x) + &self.bias
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.activation.apply(&self.affine(x))
    }

    /// The layer as a certified operator (affine certificate composed with
    /// the activation certificate). Fails when ‖W‖ > 1 or the activation
    /// carries no certificate.
    pub fn operator(&self) -> Result<AveragedOperator> {
        let w_norm = operator_norm(&self.weight);
        let affine_gamma = if w_norm < 1.0 - 1e-12 {
            (1.0 + w_norm) / 2.0
        } else if w_norm <= 1.0 + 1e-12 {
            1.0
        } else {
            return Err(Error::NotCertifiable(format!(
                "affine map has operator norm {w_norm} > 1"
            )));
        };
        let w = self.weight.clone();
        let b = self.bias.clone();
        let affine = AveragedOperator::new(
            format!("affine({}x{})", w.nrows(), w.ncols()),
            w.ncols(),
            w.nrows(),
            GammaCertificate::derived(affine_gamma)?,
            move |x: &Vector| w.dot(x) + &b,
        );
        let act = self.activation.as_operator(self.weight.nrows())?;
        compose(vec![affine, act])
    }
}

/// Relaxation schedule λ_t.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LambdaSchedule {
    Constant { value: f64 },
    /// Explicit prefix; the last entry repeats beyond the end.
    Sequence { values: Vec<f64> },
}

impl LambdaSchedule {
    pub fn constant(value: f64) -> Self {
        LambdaSchedule::Constant { value }
    }

    pub fn at(&self, t: usize) -> f64 {
        match self {
            LambdaSchedule::Constant { value } => *value,
            LambdaSchedule::Sequence { values } => {
                *values.get(t).or_else(|| values.last()).unwrap_or(&0.0)
            }
        }
    }

    /// Admissibility for certificate γ: every λ_t in [0, 1/γ], and the
    /// divergence condition Σ λ_t(1 − γλ_t) = ∞. The condition is exact for
    /// constant schedules; for explicit sequences a finite-horizon sum below
    /// a fixed threshold produces a warning instead of a rejection.
    pub fn validate(&self, gamma: f64, horizon: usize) -> Result<Vec<String>> {
        let limit = 1.0 / gamma;
        let mut warnings = Vec::new();
        match self {
            LambdaSchedule::Constant { value } => {
                let v = *value;
                if !(0.0..=limit + 1e-15).contains(&v) {
                    return Err(Error::InvalidSchedule { t: 0, lambda: v, limit });
                }
                if v <= 0.0 || v >= limit - 1e-15 {
                    return Err(Error::InvalidInput(format!(
                        "constant lambda = {v} gives a vanishing step series; need 0 < lambda < 1/gamma = {limit}"
                    )));
                }
            }
            LambdaSchedule::Sequence { values } => {
                if values.is_empty() {
                    return Err(Error::Empty("lambda sequence"));
                }
                for (t, &v) in values.iter().enumerate() {
                    if !(0.0..=limit + 1e-15).contains(&v) {
                        return Err(Error::InvalidSchedule { t, lambda: v, limit });
                    }
                }
                let sum: f64 = (0..horizon).map(|t| {
                    let l = self.at(t);
                    l * (1.0 - gamma * l)
                }).sum();
                if sum < 10.0 {
                    warnings.push(format!(
                        "lambda sequence accumulates only {sum:.3} of step mass over {horizon} steps; divergence condition not established"
                    ));
                }
            }
        }
        Ok(warnings)
    }
}

/// Default admissible constant relaxation for certificate γ.
pub fn default_lambda(gamma: f64) -> f64 {
    (1.0 / (2.0 * gamma)).min(1.0)
}

/// The network tuple: start point, layers, relaxation schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub x0: Vector,
    pub layers: Vec<LayerSpec>,
    pub lambda: LambdaSchedule,
}

impl NetworkSpec {
    pub fn new(x0: Vector, layers: Vec<LayerSpec>, lambda: LambdaSchedule) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        let mut dim = x0.len();
        for (l, layer) in layers.iter().enumerate() {
            if layer.input_dim() != dim {
                return Err(Error::dim(dim, layer.input_dim(), format!("layer {l} input")));
            }
            dim = layer.output_dim();
        }
        if dim != x0.len() {
            return Err(Error::dim(
                x0.len(),
                dim,
                "network output space must equal its input space",
            ));
        }
        Ok(NetworkSpec { x0, layers, lambda })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// All layer outputs y_1 … y_L for input x (y_0 = x).
    pub fn forward(&self, x: &Vector) -> Result<Vec<Vector>> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len(), "forward input"));
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.apply(&cur);
            outputs.push(cur.clone());
        }
        Ok(outputs)
    }

    /// The end-to-end composition as a certified operator.
    pub fn end_to_end(&self) -> Result<AveragedOperator> {
        let ops = self
            .layers
            .iter()
            .map(|l| l.operator())
            .collect::<Result<Vec<_>>>()?;
        compose(ops)
    }

    /// Relaxed fixed-point iteration with the network's schedule, certified
    /// through the composed γ.
    pub fn km_iterate(&self, tol: f64, max_iter: usize) -> Result<IterationTrace> {
        let op = self.end_to_end()?;
        let gamma = op.gamma();
        let warnings = self.lambda.validate(gamma, max_iter)?;
        let mut trace = km_loop(
            |x| Ok(self.forward(x)?.pop().expect("nonempty layers")),
            &self.x0,
            &self.lambda,
            tol,
            max_iter,
            Some(gamma),
            warnings,
        )?;
        let last = trace.iterates.last().expect("at least the start point");
        trace.layer_outputs = self.forward(last)?;
        Ok(trace)
    }

    /// Banach–Picard mode: λ ≡ 1 under max‖W_l‖ < 1 and nonexpansive
    /// activations; asserts the per-step linear rate bound Π‖W_l‖.
    pub fn contraction_mode(&self, tol: f64, max_iter: usize) -> Result<ContractionReport> {
        let mut weight_norms = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.activation.certificate().is_none() {
                return Err(Error::Precondition(format!(
                    "layer {l} activation {} carries no certificate (not verified 1-Lipschitz)",
                    layer.activation.kind.name()
                )));
            }
            let n = operator_norm(&layer.weight);
            if n >= 1.0 {
                return Err(Error::Precondition(format!(
                    "contraction mode needs max‖W‖ < 1; layer {l} has ‖W‖ = {n}"
                )));
            }
            weight_norms.push(n);
        }
        let rate_bound: f64 = weight_norms.iter().product();
        let schedule = LambdaSchedule::constant(1.0);
        let mut trace = km_loop(
            |x| Ok(self.forward(x)?.pop().expect("nonempty layers")),
            &self.x0,
            &schedule,
            tol,
            max_iter,
            None,
            Vec::new(),
        )?;
        let last = trace.iterates.last().expect("at least the start point");
        trace.layer_outputs = self.forward(last)?;

        // Ratios are only meaningful above the floating-point floor.
        let floor = 1e-13;
        let mut max_ratio = 0.0_f64;
        let seq = trace.residual_sequence();
        for w in seq.windows(2) {
            if w[0] > floor {
                max_ratio = max_ratio.max(w[1] / w[0]);
            }
        }
        let rate_ok = max_ratio <= rate_bound + 1e-9;
        Ok(ContractionReport { weight_norms, rate_bound, max_ratio, rate_ok, trace })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ResidualTol,
    MaxIter,
    Diverged,
}

/// Record of one iteration run. `residuals[t]` is the residual at iterate
/// t for each step actually taken, so `residuals.len() ==
/// iterates.len() − 1`; the residual at the stopping point lives in
/// `stop_residual`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iterates: Vec<Vector>,
    /// residuals[t] = ‖O(x_t) − x_t‖, one per step taken.
    pub residuals: Vec<f64>,
    /// λ_t actually applied, parallel to `residuals`.
    pub lambdas: Vec<f64>,
    /// ‖O(x) − x‖ at the final iterate (absent only on divergence).
    pub stop_residual: Option<f64>,
    /// Composed certificate of the iterated operator, when the run was
    /// certified.
    pub gamma: Option<f64>,
    /// Per-layer outputs at the final iterate (network runs only).
    pub layer_outputs: Vec<Vector>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub warnings: Vec<String>,
}

impl IterationTrace {
    pub fn final_iterate(&self) -> &Vector {
        self.iterates.last().expect("trace always holds x0")
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.stop_residual
    }

    /// Per-step residuals followed by the stopping residual.
    pub fn residual_sequence(&self) -> Vec<f64> {
        let mut out = self.residuals.clone();
        if let Some(r) = self.stop_residual {
            out.push(r);
        }
        out
    }

    /// CSV rows `t,residual[,distance_to_xstar]`, one per iterate with a
    /// known residual (per-step values plus the stopping point).
    pub fn to_csv(&self, x_star: Option<&Vector>) -> String {
        let mut out = String::from(match x_star {
            Some(_) => "t,residual,distance_to_xstar\n",
            None => "t,residual\n",
        });
        let seq = self.residual_sequence();
        for (t, r) in seq.iter().enumerate() {
            match x_star {
                Some(xs) => {
                    let d = dist(&self.iterates[t.min(self.iterates.len() - 1)], xs);
                    out.push_str(&format!("{t},{r:.17e},{d:.17e}\n"));
                }
                None => out.push_str(&format!("{t},{r:.17e}\n")),
            }
        }
        out
    }

    /// JSON export; iterate storage is optional and capped.
    pub fn to_json(&self, include_iterates: bool, cap: usize) -> serde_json::Value {
        let mut v = serde_json::json!({
            "residuals": self.residuals,
            "lambdas": self.lambdas,
            "stop_residual": self.stop_residual,
            "gamma": self.gamma,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "warnings": self.warnings,
            "final_iterate": self.final_iterate().to_vec(),
            "layer_outputs": self.layer_outputs.iter().map(|v| v.to_vec()).collect::<Vec<_>>(),
        });
        if include_iterates {
            let truncated = self.iterates.len() > cap;
            let slice: Vec<Vec<f64>> = self
                .iterates
                .iter()
                .take(cap)
                .map(|x| x.to_vec())
                .collect();
            v["iterates"] = serde_json::json!(slice);
            v["iterates_truncated"] = serde_json::json!(truncated);
        }
        v
    }
}

/// Iterate an arbitrary certified operator (the schedule is validated
/// against its certificate).
pub fn km_iterate_operator(
    op: &AveragedOperator,
    x0: &Vector,
    schedule: &LambdaSchedule,
    tol: f64,
    max_iter: usize,
) -> Result<IterationTrace> {
    if !op.is_endomorphism() {
        return Err(Error::Precondition(format!(
            "fixed-point iteration needs an endomorphism, {} maps {} -> {}",
            op.label(),
            op.input_dim(),
            op.output_dim()
        )));
    }
    let gamma = op.gamma();
    let warnings = schedule.validate(gamma, max_iter)?;
    km_loop(|x| op.apply(x), x0, schedule, tol, max_iter, Some(gamma), warnings)
}

/// Iterate without a certificate. The trace carries a prominent warning and
/// no γ; convergence is not guaranteed.
pub fn km_iterate_unchecked(
    eval: impl Fn(&Vector) -> Result<Vector>,
    x0: &Vector,
    schedule: &LambdaSchedule,
    tol: f64,
    max_iter: usize,
) -> Result<IterationTrace> {
    let warnings = vec!["uncertified operator: no averagedness certificate backs this run".to_string()];
    km_loop(eval, x0, schedule, tol, max_iter, None, warnings)
}

fn km_loop(
    eval: impl Fn(&Vector) -> Result<Vector>,
    x0: &Vector,
    schedule: &LambdaSchedule,
    tol: f64,
    max_iter: usize,
    gamma: Option<f64>,
    warnings: Vec<String>,
) -> Result<IterationTrace> {
    let mut iterates = vec![x0.clone()];
    let mut residuals = Vec::new();
    let mut lambdas = Vec::new();
    let mut x = x0.clone();
    let mut converged = false;
    let stop_reason;
    let mut stop_residual = None;
    let mut t = 0usize;
    loop {
        let ox = eval(&x)?;
        if !all_finite(&ox) {
            stop_reason = StopReason::Diverged;
            break;
        }
        let r = dist(&ox, &x);
        if r <= tol {
            converged = true;
            stop_reason = StopReason::ResidualTol;
            stop_residual = Some(r);
            break;
        }
        if t >= max_iter {
            stop_reason = StopReason::MaxIter;
            stop_residual = Some(r);
            break;
        }
        residuals.push(r);
        let lambda = schedule.at(t);
        lambdas.push(lambda);
        x = Array1::from_shape_fn(x.len(), |i| x[i] + lambda * (ox[i] - x[i]));
        iterates.push(x.clone());
        t += 1;
    }
    Ok(IterationTrace {
        iterates,
        residuals,
        lambdas,
        stop_residual,
        gamma,
        layer_outputs: Vec::new(),
        converged,
        stop_reason,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub weight_norms: Vec<f64>,
    /// Π‖W_l‖, the proven linear rate.
    pub rate_bound: f64,
    pub max_ratio: f64,
    pub rate_ok: bool,
    pub trace: IterationTrace,
}

#[derive(Debug, Clone, Serialize)]
pub struct FejerReport {
    pub monotone: bool,
    pub max_increase: f64,
    pub telescoping_lhs: f64,
    pub telescoping_rhs: f64,
    pub telescoping_ok: bool,
}

/// Check Fejér monotonicity of a certified trace towards a validated fixed
/// point, and the telescoping bound
/// Σ ε_t(1−ε_t)‖x_t − Õ(x_t)‖² ≤ ‖x_0 − x*‖² with ε_t = γλ_t and
/// Õ = (1−1/γ)Id + (1/γ)O.
pub fn fejer_check(
    op: &AveragedOperator,
    trace: &IterationTrace,
    x_star: &Vector,
    fixed_point_tol: f64,
    monotone_tol: f64,
) -> Result<FejerReport> {
    let gamma = trace
        .gamma
        .ok_or_else(|| Error::Precondition("fejer_check needs a certified trace".into()))?;
    let residual_at_star = op.residual(x_star)?;
    if residual_at_star > fixed_point_tol {
        return Err(Error::Precondition(format!(
            "x_star is not a fixed point: residual {residual_at_star} > {fixed_point_tol}"
        )));
    }
    let mut max_increase = f64::NEG_INFINITY;
    let mut prev = dist(&trace.iterates[0], x_star);
    for x in &trace.iterates[1..] {
        let d = dist(x, x_star);
        max_increase = max_increase.max(d - prev);
        prev = d;
    }
    if trace.iterates.len() < 2 {
        max_increase = 0.0;
    }
    let monotone = max_increase <= monotone_tol;

    // ‖x_t − Õ(x_t)‖ = ‖x_t − O(x_t)‖ / γ
    let mut lhs = 0.0;
    for (t, r) in trace.residuals.iter().enumerate() {
        let lambda = trace.lambdas[t];
        let eps = gamma * lambda;
        lhs += eps * (1.0 - eps) * (r / gamma) * (r / gamma);
    }
    let d0 = dist(&trace.iterates[0], x_star);
    let rhs = d0 * d0;
    let telescoping_ok = lhs <= rhs + 1e-10;
    Ok(FejerReport {
        monotone,
        max_increase: if max_increase == f64::NEG_INFINITY { 0.0 } else { max_increase },
        telescoping_lhs: lhs,
        telescoping_rhs: rhs,
        telescoping_ok,
    })
}

/// Continue iterating from a converged trace to sharpen the fixed point
/// (used before distance-based diagnostics, where the target must be far
/// more accurate than the trace's own tolerance).
pub fn polish_fixed_point(op: &AveragedOperator, start: &Vector, max_iter: usize) -> Result<Vector> {
    let mut x = start.clone();
    let mut best = op.residual(&x)?;
    for _ in 0..max_iter {
        let ox = op.apply(&x)?;
        if !all_finite(&ox) {
            break;
        }
        let r = dist(&ox, &x);
        if r >= best && r < 1e-13 {
            break;
        }
        best = best.min(r);
        x = ox;
    }
    Ok(x)
}
