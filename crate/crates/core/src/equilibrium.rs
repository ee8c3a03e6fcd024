//! Equilibrium verification for the layer game.
//!
//! A converged network state assigns each layer l an output x*_l; the state
//! is a Nash equilibrium of the game whose player l minimizes
//! f_l(y) + ½‖y − b_l − W_l x*_{l−1}‖² exactly when every layer satisfies
//! the fixed-point equation x*_l = r_l(W_l x*_{l−1} + b_l) (indices cyclic,
//! x*_0 ≡ x*_L). `verify_nash` checks the fixed-point form on every layer
//! and, where the activation's potential is known in closed form, also the
//! prox best-response and a sampled unilateral-deviation test.
//!
//! `pocs_demo` instantiates the cyclic-projection construction behind the
//! non-potential claim: with f_l the indicators of distinct convex sets and
//! identity weights, the composed operator's fixed points are exactly the
//! intersection, and the iteration lands in it.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::{potential_for_kind, prox_eval};
use crate::error::{Error, Result};
use crate::linalg::{dist, norm, Vector};
use crate::network::{km_iterate_operator, IterationTrace, LambdaSchedule, NetworkSpec};
use crate::operator::{compose, AveragedOperator, GammaCertificate};
use crate::rng;

// The first-order (variational-inequality) side of the equilibrium story
// lives with the training types; re-exported here because verification
// reads from both sides.
pub use crate::training::{vi_directional_min, vi_residual};

/// A nonempty closed convex set with an exact projector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ConvexSet {
    Box { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
    /// { x : ⟨normal, x⟩ ≥ min_value }
    Halfspace { normal: Vector, min_value: f64 },
    /// point + span(basis)
    AffineSubspace { point: Vector, basis: Vec<Vector> },
}

impl ConvexSet {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::dim(lo.len(), hi.len(), "box bounds"));
                }
                if lo.iter().zip(hi.iter()).any(|(a, b)| a > b) {
                    return Err(Error::InvalidInput("box with lo > hi is empty".into()));
                }
                Ok(())
            }
            ConvexSet::Ball { radius, .. } => {
                if *radius < 0.0 {
                    return Err(Error::InvalidInput("negative ball radius".into()));
                }
                Ok(())
            }
            ConvexSet::Halfspace { normal, .. } => {
                if norm(normal) == 0.0 {
                    return Err(Error::InvalidInput("halfspace with zero normal".into()));
                }
                Ok(())
            }
            ConvexSet::AffineSubspace { point, basis } => {
                for b in basis {
                    if b.len() != point.len() {
                        return Err(Error::dim(point.len(), b.len(), "affine basis vector"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::AffineSubspace { point, .. } => point.len(),
        }
    }

    pub fn project(&self, x: &Vector) -> Vector {
        match self {
            ConvexSet::Box { lo, hi } => {
                Array1::from_shape_fn(x.len(), |i| x[i].clamp(lo[i], hi[i]))
            }
            ConvexSet::Ball { center, radius } => {
                let d = x - center;
                let n = norm(&d);
                if n <= *radius {
                    x.clone()
                } else {
                    center + &(d * (*radius / n))
                }
            }
            ConvexSet::Halfspace { normal, min_value } => {
                let v = normal.dot(x);
                if v >= *min_value {
                    x.clone()
                } else {
                    x + &(normal * ((min_value - v) / normal.dot(normal)))
                }
            }
            ConvexSet::AffineSubspace { point, basis } => {
                // Orthonormalize the basis once per call (sets here are tiny).
                let mut ortho: Vec<Vector> = Vec::new();
                for b in basis {
                    let mut v = b.clone();
                    for u in &ortho {
                        let c = v.dot(u);
                        v = &v - &(u * c);
                    }
                    let n = norm(&v);
                    if n > 1e-12 {
                        ortho.push(v / n);
                    }
                }
                let shifted = x - point;
                let mut proj = point.clone();
                for u in &ortho {
                    let c = shifted.dot(u);
                    proj = &proj + &(u * c);
                }
                proj
            }
        }
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        dist(x, &self.project(x))
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// The projector as an operator. Projections onto closed convex sets
    /// are firmly nonexpansive, i.e. 1/2-averaged.
    pub fn projector(&self) -> AveragedOperator {
        let set = self.clone();
        let d = self.dim();
        AveragedOperator::new(
            format!("proj[{}]", self.label()),
            d,
            d,
            GammaCertificate::derived(0.5).expect("1/2 is a valid gamma"),
            move |x: &Vector| set.project(x),
        )
    }

    fn label(&self) -> &'static str {
        match self {
            ConvexSet::Box { .. } => "box",
            ConvexSet::Ball { .. } => "ball",
            ConvexSet::Halfspace { .. } => "halfspace",
            ConvexSet::AffineSubspace { .. } => "affine",
        }
    }
}

/// Joint layer state x* = (x*_1, …, x*_L), with x*_0 ≡ x*_L.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerGameState {
    pub states: Vec<Vector>,
}

impl LayerGameState {
    /// The state read off a converged trace's layer outputs.
    pub fn from_trace_outputs(layer_outputs: &[Vector]) -> Self {
        LayerGameState { states: layer_outputs.to_vec() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationTest {
    pub samples: usize,
    /// Largest objective improvement found by any sampled unilateral
    /// deviation (positive = the state was not a best response).
    pub best_improvement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NashReport {
    pub per_layer_residual: Vec<f64>,
    pub is_equilibrium: bool,
    /// Layers double-checked through the prox form (closed-form potential).
    pub prox_checked_layers: Vec<usize>,
    /// max |prox(f, a_i) − x*_i| over the prox-checked layers.
    pub max_prox_residual: f64,
    /// Layers whose activation has no closed-form potential; only the
    /// fixed-point form applies there.
    pub prox_skipped_layers: Vec<usize>,
    pub deviation_test: DeviationTest,
    pub verdict: String,
}

/// Sampled deviation scales around the candidate best response.
const DEVIATION_SCALES: [f64; 3] = [1e-3, 1e-1, 1.0];

/// Verify the Nash characterization of a layer state.
///
/// Every layer is checked in the operational fixed-point form
/// ‖x*_l − r_l(W_l x*_{l−1} + b_l)‖ ≤ tol. Layers with a closed-form
/// potential additionally get an independent prox evaluation and a sampled
/// unilateral-deviation test of the layer objective
/// f_l(y) + ½‖y − b_l − W_l x*_{l−1}‖².
pub fn verify_nash(
    net: &NetworkSpec,
    state: &LayerGameState,
    tol: f64,
    deviations_per_layer: usize,
    seed: u64,
) -> Result<NashReport> {
    let layer_count = net.layers.len();
    if state.states.len() != layer_count {
        return Err(Error::dim(layer_count, state.states.len(), "layer states"));
    }
    for (l, layer) in net.layers.iter().enumerate() {
        if state.states[l].len() != layer.output_dim() {
            return Err(Error::dim(layer.output_dim(), state.states[l].len(), format!("state of layer {l}")));
        }
    }
    let mut per_layer_residual = Vec::with_capacity(layer_count);
    let mut prox_checked_layers = Vec::new();
    let mut prox_skipped_layers = Vec::new();
    let mut max_prox_residual = 0.0_f64;
    let mut best_improvement = f64::NEG_INFINITY;
    let mut samples_total = 0usize;
    let mut rng = rng::stream(seed, "equilibrium.deviations");

    for (l, layer) in net.layers.iter().enumerate() {
        let prev = if l == 0 {
            &state.states[layer_count - 1]
        } else {
            &state.states[l - 1]
        };
        let best_response = layer.apply(prev);
        per_layer_residual.push(dist(&state.states[l], &best_response));

        match potential_for_kind(&layer.activation.kind) {
            Some(f) => {
                prox_checked_layers.push(l);
                let a = layer.affine(prev);
                for (i, &ai) in a.iter().enumerate() {
                    let p = prox_eval(&f, ai, 1e-10)?;
                    max_prox_residual = max_prox_residual.max((p - state.states[l][i]).abs());
                }
                // Unilateral deviations of this layer's output.
                let x_l = &state.states[l];
                let objective = |y: &Vector| -> f64 {
                    let mut val = 0.0;
                    for (i, &yi) in y.iter().enumerate() {
                        val += f.value(yi);
                        let d = yi - a[i];
                        val += 0.5 * d * d;
                    }
                    val
                };
                let base = objective(x_l);
                for s in 0..deviations_per_layer {
                    let scale = DEVIATION_SCALES[s % DEVIATION_SCALES.len()];
                    let y = Array1::from_shape_fn(x_l.len(), |i| {
                        let g: f64 = rng.sample(StandardNormal);
                        x_l[i] + scale * g
                    });
                    let improvement = base - objective(&y);
                    best_improvement = best_improvement.max(improvement);
                    samples_total += 1;
                }
            }
            None => prox_skipped_layers.push(l),
        }
    }
    if best_improvement == f64::NEG_INFINITY {
        best_improvement = 0.0;
    }
    let is_equilibrium = per_layer_residual.iter().all(|r| *r <= tol)
        && best_improvement <= tol;
    let verdict = if is_equilibrium {
        "equilibrium".to_string()
    } else {
        "not an equilibrium".to_string()
    };
    Ok(NashReport {
        per_layer_residual,
        is_equilibrium,
        prox_checked_layers,
        max_prox_residual,
        prox_skipped_layers,
        deviation_test: DeviationTest { samples: samples_total, best_improvement },
        verdict,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PocsReport {
    /// Distance of the final iterate to each set.
    pub membership_distances: Vec<f64>,
    pub all_member: bool,
    /// Projectors evaluated at probes around the limit differ pairwise,
    /// witnessing genuinely distinct player objectives.
    pub projectors_pairwise_distinct: bool,
    pub trace: IterationTrace,
}

/// Cyclic projections onto three or more convex sets with a common point.
///
/// The composed projector is averaged (each factor is 1/2-averaged), its
/// fixed points are exactly the intersection, and the λ ≡ 1 iteration
/// converges into it.
pub fn pocs_demo(
    sets: &[ConvexSet],
    x0: &Vector,
    membership_tol: f64,
    residual_tol: f64,
    max_iter: usize,
    common_point: Option<&Vector>,
) -> Result<PocsReport> {
    if sets.len() < 3 {
        return Err(Error::Precondition(format!(
            "the cyclic construction needs at least 3 sets, got {}",
            sets.len()
        )));
    }
    for s in sets {
        s.validate()?;
        if s.dim() != x0.len() {
            return Err(Error::dim(x0.len(), s.dim(), "set dimension"));
        }
    }
    if let Some(p) = common_point {
        for (i, s) in sets.iter().enumerate() {
            if !s.contains(p, 1e-9) {
                return Err(Error::Precondition(format!(
                    "declared common point misses set {i} by {}",
                    s.distance(p)
                )));
            }
        }
    }
    let op = compose(sets.iter().map(|s| s.projector()).collect())?;
    let trace = km_iterate_operator(&op, x0, &LambdaSchedule::constant(1.0), residual_tol, max_iter)?;
    let last = trace.final_iterate().clone();
    let membership_distances: Vec<f64> = sets.iter().map(|s| s.distance(&last)).collect();
    let all_member = membership_distances.iter().all(|d| *d <= membership_tol);

    // Probe a small neighbourhood of the limit: distinct sets must project
    // some probe to different points.
    let mut rng = rng::stream(0xD15C, "equilibrium.pocs_probes");
    let mut probes = vec![last.clone()];
    for _ in 0..8 {
        probes.push(Array1::from_shape_fn(last.len(), |i| {
            let g: f64 = rng.sample(StandardNormal);
            last[i] + g
        }));
    }
    let mut distinct = true;
    'pairs: for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            let differs = probes
                .iter()
                .any(|p| dist(&sets[i].project(p), &sets[j].project(p)) > 1e-9);
            if !differs {
                distinct = false;
                break 'pairs;
            }
        }
    }
    Ok(PocsReport {
        membership_distances,
        all_member,
        projectors_pairwise_distinct: distinct,
        trace,
    })
}
