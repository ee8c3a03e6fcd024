//! Averaged operators and their calculus.
//!
//! An operator `O` on ℝⁿ is γ-averaged (γ ∈ (0,1]) when `Id + (1/γ)(O − Id)`
//! is nonexpansive, equivalently when for all x, y
//!
//! ```text
//! ‖O(x)−O(y)‖² ≤ ‖x−y‖² − ((1−γ)/γ)·‖x−O(x)−y+O(y)‖²
//! ```
//!
//! The module carries γ as a *certificate* attached to each operator and
//! implements the closure rules: composition, convex combination, and the
//! promotion of a μ-Lipschitz map (μ < 1) to a (1+μ)/2-averaged one.
//! Certificates are verified numerically on sampled pairs; `check_averaged`
//! reports the worst violation and a witness pair when the inequality fails.

use std::fmt;
use std::sync::Arc;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist, sorted_sum, Vector};
use crate::rng;

/// How a γ value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Stated in closed form by the activation tables.
    ClosedFormPaper,
    /// Derived from a formula (Lipschitz promotion, composition rule, ...).
    DerivedFormula,
    /// Estimated from sampled pairs; carries estimate metadata.
    NumericEstimate,
}

/// Metadata attached to numerically estimated certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub samples: usize,
    pub lipschitz_estimate: f64,
    /// Largest observed LHS − RHS of the averagedness inequality at the
    /// certified γ (≤ tol by construction).
    pub max_observed_violation: f64,
}

/// A γ value in (0, 1] with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCertificate {
    pub gamma: f64,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateMeta>,
}

impl GammaCertificate {
    pub fn new(gamma: f64, provenance: Provenance, estimate: Option<EstimateMeta>) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidGamma(gamma));
        }
        if provenance == Provenance::NumericEstimate && estimate.is_none() {
            return Err(Error::InvalidInput(
                "numeric_estimate certificates must carry estimate metadata".into(),
            ));
        }
        Ok(GammaCertificate {
            gamma,
            provenance,
            estimate,
        })
    }

    pub fn closed_form(gamma: f64) -> Result<Self> {
        Self::new(gamma, Provenance::ClosedFormPaper, None)
    }

    pub fn derived(gamma: f64) -> Result<Self> {
        Self::new(gamma, Provenance::DerivedFormula, None)
    }

    pub fn numeric(gamma: f64, meta: EstimateMeta) -> Result<Self> {
        Self::new(gamma, Provenance::NumericEstimate, Some(meta))
    }
}

/// Outcome of a γ estimation: either a certificate or an explicit refusal.
/// A refusal is never silently turned into a made-up γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GammaEstimate {
    Certified(GammaCertificate),
    NotCertifiable {
        lipschitz_estimate: f64,
        samples: usize,
    },
}

impl GammaEstimate {
    pub fn certificate(&self) -> Option<&GammaCertificate> {
        match self {
            GammaEstimate::Certified(c) => Some(c),
            GammaEstimate::NotCertifiable { .. } => None,
        }
    }
}

type EvalFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// An evaluatable map on finite-dimensional real space carrying a γ
/// certificate. Evaluation is pure; values are safe to share across threads.
#[derive(Clone)]
pub struct AveragedOperator {
    label: String,
    input_dim: usize,
    output_dim: usize,
    certificate: GammaCertificate,
    eval: EvalFn,
}

impl fmt::Debug for AveragedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AveragedOperator")
            .field("label", &self.label)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .field("certificate", &self.certificate)
            .finish()
    }
}

impl AveragedOperator {
    pub fn new(
        label: impl Into<String>,
        input_dim: usize,
        output_dim: usize,
        certificate: GammaCertificate,
        eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        AveragedOperator {
            label: label.into(),
            input_dim,
            output_dim,
            certificate,
            eval: Arc::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_endomorphism(&self) -> bool {
        self.input_dim == self.output_dim
    }

    pub fn certificate(&self) -> &GammaCertificate {
        &self.certificate
    }

    pub fn gamma(&self) -> f64 {
        self.certificate.gamma
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.input_dim {
            return Err(Error::dim(self.input_dim, x.len(), format!("operator {}", self.label)));
        }
        Ok((self.eval)(x))
    }

    /// ‖O(x) − x‖; only defined for endomorphisms.
    pub fn residual(&self, x: &Vector) -> Result<f64> {
        if !self.is_endomorphism() {
            return Err(Error::Precondition(format!(
                "residual needs an endomorphism, {} maps {} -> {}",
                self.label, self.input_dim, self.output_dim
            )));
        }
        Ok(dist(&self.apply(x)?, x))
    }

    /// The identity on ℝⁿ. 1-averaged with equality in the defining bound.
    pub fn identity(dim: usize) -> Self {
        AveragedOperator::new(
            "identity",
            dim,
            dim,
            GammaCertificate::closed_form(1.0).expect("1 is a valid gamma"),
            |x: &Vector| x.clone(),
        )
    }

    /// The constant map x ↦ c. Lipschitz constant 0, hence 1/2-averaged.
    pub fn constant(c: Vector) -> Self {
        let dim = c.len();
        AveragedOperator::new(
            "constant",
            dim,
            dim,
            GammaCertificate::derived(0.5).expect("valid gamma"),
            move |_x: &Vector| c.clone(),
        )
    }

    /// x ↦ a·x for |a| < 1, certified through Lipschitz promotion.
    pub fn scaling(dim: usize, a: f64) -> Result<Self> {
        promote_lipschitz(format!("scale({a})"), dim, a.abs(), move |x: &Vector| x * a)
    }
}

/// Report produced by `check_averaged`, serializable for the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub label: String,
    pub gamma: f64,
    pub provenance: Provenance,
    pub pass: bool,
    pub samples: usize,
    /// max over pairs of LHS − RHS in the averagedness inequality.
    pub worst_violation: f64,
    /// The violating pair when `pass` is false.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub tol: f64,
}

/// Violation of the γ-averagedness inequality on one pair:
/// LHS − RHS = ‖O(x)−O(y)‖² − ‖x−y‖² + ((1−γ)/γ)·‖x−O(x)−y+O(y)‖².
///
/// The correction term vanishes at γ = 1, so the γ = 1 check (plain
/// nonexpansiveness) is well defined even for maps that change dimension.
fn pair_violation(x: &Vector, y: &Vector, ox: &Vector, oy: &Vector, gamma: f64) -> f64 {
    let lhs = {
        let d = dist(ox, oy);
        d * d
    };
    let dxy = dist(x, y);
    let mut rhs = dxy * dxy;
    if gamma < 1.0 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let d = (x[i] - ox[i]) - (y[i] - oy[i]);
            acc += d * d;
        }
        rhs -= (1.0 - gamma) / gamma * acc;
    }
    lhs - rhs
}

/// Test the averagedness inequality at `gamma` on the given pairs.
///
/// `pass` holds iff every pair satisfies the inequality within `tol`.
/// `eval` is called twice per pair; dimensions are validated against
/// `(input_dim, output_dim)`. For γ < 1 the map must be an endomorphism.
pub fn check_averaged(
    label: impl Into<String>,
    eval: impl Fn(&Vector) -> Vector,
    input_dim: usize,
    output_dim: usize,
    gamma: f64,
    pairs: &[(Vector, Vector)],
    tol: f64,
) -> Result<CheckReport> {
    if !(gamma > 0.0 && gamma <= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidGamma(gamma));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("check_averaged needs at least one pair"));
    }
    if gamma < 1.0 && input_dim != output_dim {
        return Err(Error::Precondition(format!(
            "gamma < 1 check needs an endomorphism ({input_dim} -> {output_dim})"
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for (x, y) in pairs {
        if x.len() != input_dim || y.len() != input_dim {
            return Err(Error::dim(input_dim, x.len().max(y.len()), "check_averaged pair"));
        }
        let ox = eval(x);
        let oy = eval(y);
        if ox.len() != output_dim || oy.len() != output_dim {
            return Err(Error::dim(output_dim, ox.len(), "check_averaged output"));
        }
        let v = pair_violation(x, y, &ox, &oy, gamma);
        if v > worst {
            worst = v;
            if v > tol {
                witness = Some((x.to_vec(), y.to_vec()));
            }
        }
    }
    let pass = worst <= tol;
    Ok(CheckReport {
        label: label.into(),
        gamma,
        provenance: Provenance::NumericEstimate,
        pass,
        samples: pairs.len(),
        worst_violation: worst,
        witness: if pass { None } else { witness },
        tol,
    })
}

/// Convenience: check an operator's own certificate on sampled pairs.
pub fn check_operator(
    op: &AveragedOperator,
    pairs: &[(Vector, Vector)],
    tol: f64,
) -> Result<CheckReport> {
    let mut report = check_averaged(
        op.label(),
        |x| (op.eval)(x),
        op.input_dim,
        op.output_dim,
        op.gamma(),
        pairs,
        tol,
    )?;
    report.provenance = op.certificate.provenance;
    Ok(report)
}

/// Uniform pairs in the box [lo, hi]^dim under the crate seeding scheme.
pub fn sample_pairs(dim: usize, lo: f64, hi: f64, count: usize, seed: u64) -> Vec<(Vector, Vector)> {
    let mut rng = rng::stream(seed, "operator.sample_pairs");
    (0..count)
        .map(|_| {
            let x = Array1::from_shape_fn(dim, |_| rng.gen_range(lo..=hi));
            let y = Array1::from_shape_fn(dim, |_| rng.gen_range(lo..=hi));
            (x, y)
        })
        .collect()
}

/// Pairs for probing operator inequalities: alternating far pairs (both
/// endpoints uniform in the box) and near pairs (a uniform base point plus a
/// small offset), so both global behaviour and local slopes are sampled.
pub fn sample_probe_pairs(
    dim: usize,
    lo: f64,
    hi: f64,
    count: usize,
    seed: u64,
) -> Vec<(Vector, Vector)> {
    let mut rng = rng::stream(seed, "operator.sample_probe_pairs");
    let width = hi - lo;
    let scales = [1e-4, 1e-2, 0.1 * width];
    (0..count)
        .map(|i| {
            let x = Array1::from_shape_fn(dim, |_| rng.gen_range(lo..=hi));
            let y = if i % 2 == 0 {
                Array1::from_shape_fn(dim, |_| rng.gen_range(lo..=hi))
            } else {
                let scale = scales[(i / 2) % scales.len()];
                Array1::from_shape_fn(dim, |k| {
                    let g: f64 = rng.gen_range(-1.0..=1.0);
                    (x[k] + scale * g).clamp(lo, hi)
                })
            };
            (x, y)
        })
        .collect()
}

/// Composition O_n ∘ … ∘ O_1: the first list element is applied first.
///
/// The certificate follows the composition rule
/// γ = 1 / (1 + 1/Σ_l γ_l/(1−γ_l)); a factor with γ_l = 1 makes the sum
/// infinite and the composed certificate 1 (the formula's continuous limit).
pub fn compose(ops: Vec<AveragedOperator>) -> Result<AveragedOperator> {
    if ops.is_empty() {
        return Err(Error::Empty("compose needs at least one operator"));
    }
    for w in ops.windows(2) {
        if w[0].output_dim != w[1].input_dim {
            return Err(Error::dim(
                w[0].output_dim,
                w[1].input_dim,
                format!("composition chain {} -> {}", w[0].label, w[1].label),
            ));
        }
    }
    let gamma = compose_gamma(&ops.iter().map(|o| o.gamma()).collect::<Vec<_>>());
    // Formula result over input certificates, whatever their provenance.
    let certificate = GammaCertificate::derived(gamma)?;
    let label = ops
        .iter()
        .rev()
        .map(|o| o.label.clone())
        .collect::<Vec<_>>()
        .join(" ∘ ");
    let input_dim = ops[0].input_dim;
    let output_dim = ops.last().unwrap().output_dim;
    let chain: Vec<EvalFn> = ops.iter().map(|o| o.eval.clone()).collect();
    Ok(AveragedOperator::new(
        label,
        input_dim,
        output_dim,
        certificate,
        move |x: &Vector| {
            let mut v = x.clone();
            for f in &chain {
                v = f(&v);
            }
            v
        },
    ))
}

/// γ of a composition of γ_l-averaged operators.
pub fn compose_gamma(gammas: &[f64]) -> f64 {
    if gammas.len() == 1 {
        return gammas[0];
    }
    let mut sum = 0.0;
    for &g in gammas {
        if g >= 1.0 - 1e-15 {
            return 1.0;
        }
        sum += g / (1.0 - g);
    }
    1.0 / (1.0 + 1.0 / sum)
}

/// Pointwise convex combination Σ ω_l O_l with certificate γ = Σ ω_l γ_l.
///
/// Summation happens per coordinate in a value-sorted order, so evaluating a
/// permutation of `(ops, weights)` returns bitwise-identical vectors.
pub fn weighted_sum(ops: Vec<AveragedOperator>, weights: Vec<f64>) -> Result<AveragedOperator> {
    if ops.is_empty() {
        return Err(Error::Empty("weighted_sum needs at least one operator"));
    }
    if ops.len() != weights.len() {
        return Err(Error::dim(ops.len(), weights.len(), "weights per operator"));
    }
    let sum: f64 = weights.iter().sum();
    let min = weights.iter().cloned().fold(f64::MAX, f64::min);
    if min < 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights { sum, min });
    }
    let dim_in = ops[0].input_dim;
    let dim_out = ops[0].output_dim;
    for o in &ops {
        if o.input_dim != dim_in || o.output_dim != dim_out {
            return Err(Error::dim(dim_in, o.input_dim, "weighted_sum operand dims"));
        }
    }
    let gamma: f64 = ops
        .iter()
        .zip(&weights)
        .map(|(o, w)| w * o.gamma())
        .sum::<f64>()
        .min(1.0);
    let certificate = GammaCertificate::derived(gamma)?;
    let label = format!(
        "Σω·[{}]",
        ops.iter().map(|o| o.label.as_str()).collect::<Vec<_>>().join(", ")
    );
    let evals: Vec<EvalFn> = ops.iter().map(|o| o.eval.clone()).collect();
    Ok(AveragedOperator::new(
        label,
        dim_in,
        dim_out,
        certificate,
        move |x: &Vector| {
            let outputs: Vec<Vector> = evals.iter().map(|f| f(x)).collect();
            Array1::from_shape_fn(dim_out, |k| {
                let mut terms: Vec<f64> =
                    outputs.iter().zip(&weights).map(|(o, w)| w * o[k]).collect();
                sorted_sum(&mut terms)
            })
        },
    ))
}

/// Wrap a μ-Lipschitz map (μ < 1) as a (1+μ)/2-averaged operator.
pub fn promote_lipschitz(
    label: impl Into<String>,
    dim: usize,
    mu: f64,
    eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
) -> Result<AveragedOperator> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Precondition(format!(
            "Lipschitz promotion needs mu in [0, 1), got {mu}"
        )));
    }
    let certificate = GammaCertificate::derived((1.0 + mu) / 2.0)?;
    Ok(AveragedOperator::new(label, dim, dim, certificate, eval))
}

/// Estimate a γ certificate for an arbitrary map from sampled pairs on
/// `[lo, hi]^dim`.
///
/// The Lipschitz constant μ̂ is the largest sampled difference quotient.
/// μ̂ < 1 yields γ = (1+μ̂)/2 through the promotion rule. Otherwise a
/// bisection looks for the smallest γ that passes `check_averaged` on the
/// sample; if even γ = 1 fails, the map is reported not certifiable.
pub fn estimate_gamma(
    eval: impl Fn(&Vector) -> Vector,
    dim: usize,
    lo: f64,
    hi: f64,
    samples: usize,
    seed: u64,
) -> Result<GammaEstimate> {
    if samples < 2 {
        return Err(Error::Precondition("estimate_gamma needs at least 2 samples".into()));
    }
    if !(hi > lo) {
        return Err(Error::Precondition(format!("degenerate box [{lo}, {hi}]")));
    }
    let pairs = sample_probe_pairs(dim, lo, hi, samples, seed);
    let mut cached: Vec<(Vector, Vector, Vector, Vector)> = Vec::with_capacity(pairs.len());
    let mut mu_hat = 0.0_f64;
    for (x, y) in pairs {
        let ox = eval(&x);
        let oy = eval(&y);
        if !all_finite(&ox) || !all_finite(&oy) {
            return Err(Error::NonFinite("estimate_gamma evaluation"));
        }
        let dxy = dist(&x, &y);
        if dxy > 1e-12 {
            mu_hat = mu_hat.max(dist(&ox, &oy) / dxy);
        }
        cached.push((x, y, ox, oy));
    }
    let tol = 1e-9;
    let worst_at = |gamma: f64| -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (x, y, ox, oy) in &cached {
            worst = worst.max(pair_violation(x, y, ox, oy, gamma));
        }
        worst
    };
    if mu_hat < 1.0 - 1e-9 {
        let gamma = (1.0 + mu_hat) / 2.0;
        let meta = EstimateMeta {
            samples,
            lipschitz_estimate: mu_hat,
            max_observed_violation: worst_at(gamma),
        };
        return Ok(GammaEstimate::Certified(GammaCertificate::numeric(gamma, meta)?));
    }
    if worst_at(1.0) > tol {
        return Ok(GammaEstimate::NotCertifiable {
            lipschitz_estimate: mu_hat,
            samples,
        });
    }
    // Pass at γ=1 is monotone in γ; bisect down to the smallest passing value.
    let mut lo_g = 1e-6;
    let mut hi_g = 1.0;
    if worst_at(lo_g) <= tol {
        hi_g = lo_g;
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo_g + hi_g);
            if worst_at(mid) <= tol {
                hi_g = mid;
            } else {
                lo_g = mid;
            }
        }
    }
    let meta = EstimateMeta {
        samples,
        lipschitz_estimate: mu_hat,
        max_observed_violation: worst_at(hi_g),
    };
    Ok(GammaEstimate::Certified(GammaCertificate::numeric(hi_g, meta)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pairs_1d(vals: &[(f64, f64)]) -> Vec<(Vector, Vector)> {
        vals.iter().map(|&(a, b)| (array![a], array![b])).collect()
    }

    #[test]
    fn identity_passes_any_gamma() {
        let pairs = sample_pairs(3, -20.0, 20.0, 100, 7);
        for gamma in [0.1, 0.5, 1.0] {
            let r = check_averaged("id", |x| x.clone(), 3, 3, gamma, &pairs, 1e-9).unwrap();
            assert!(r.pass, "identity must pass at gamma {gamma}");
            assert!(r.worst_violation <= 0.0 + 1e-12);
        }
    }

    #[test]
    fn doubling_fails_with_witness() {
        let pairs = pairs_1d(&[(0.0, 1.0)]);
        let r = check_averaged("2x", |x| x * 2.0, 1, 1, 1.0, &pairs, 1e-9).unwrap();
        assert!(!r.pass);
        assert!((r.worst_violation - 3.0).abs() < 1e-12, "LHS 4, RHS 1");
        assert!(r.witness.is_some());
    }

    #[test]
    fn translation_is_nonexpansive() {
        let pairs = sample_pairs(1, -20.0, 20.0, 200, 11);
        let r = check_averaged("x+2023", |x| x + 2023.0, 1, 1, 1.0, &pairs, 1e-9).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn compose_certificates() {
        let a = AveragedOperator::constant(array![0.0]);
        let b = AveragedOperator::constant(array![1.0]);
        let c = compose(vec![a, b]).unwrap();
        assert!((c.gamma() - 2.0 / 3.0).abs() < 1e-15, "two 1/2 factors give 2/3");

        let id = AveragedOperator::identity(1);
        let half = AveragedOperator::constant(array![0.0]);
        let with_identity = compose(vec![id, half]).unwrap();
        assert_eq!(with_identity.gamma(), 1.0, "a gamma = 1 factor forces the limit 1");

        let single = compose(vec![AveragedOperator::constant(array![0.5])]).unwrap();
        assert_eq!(single.gamma(), 0.5);
    }

    #[test]
    fn compose_rejects_empty_and_mismatched() {
        assert!(compose(vec![]).is_err());
        let a = AveragedOperator::identity(2);
        let b = AveragedOperator::identity(3);
        assert!(compose(vec![a, b]).is_err());
    }

    #[test]
    fn weighted_sum_certificate_and_validation() {
        let a = AveragedOperator::constant(array![0.0]); // gamma 1/2
        let b = AveragedOperator::identity(1)
            .apply(&array![0.0])
            .map(|_| ())
            .ok();
        let _ = b;
        let c = promote_lipschitz("half", 1, 0.5, |x: &Vector| x * 0.5).unwrap(); // gamma 3/4
        let s = weighted_sum(vec![a.clone(), c], vec![0.5, 0.5]).unwrap();
        assert!((s.gamma() - 0.625).abs() < 1e-15);

        assert!(weighted_sum(vec![a.clone()], vec![0.7]).is_err());
        let d = AveragedOperator::constant(array![1.0]);
        assert!(weighted_sum(vec![a, d], vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn weighted_sum_permutation_bitwise() {
        let ops = |k: usize| {
            AveragedOperator::new(
                format!("op{k}"),
                1,
                1,
                GammaCertificate::derived(1.0).unwrap(),
                move |x: &Vector| x * ((k as f64 + 1.0) / 7.0),
            )
        };
        let x = array![0.123456789];
        let w = vec![0.2, 0.3, 0.5];
        let fwd = weighted_sum(vec![ops(0), ops(1), ops(2)], w.clone()).unwrap();
        let perm = weighted_sum(vec![ops(2), ops(0), ops(1)], vec![w[2], w[0], w[1]]).unwrap();
        let a = fwd.apply(&x).unwrap();
        let b = perm.apply(&x).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn promotion_values() {
        let half = promote_lipschitz("x/2", 1, 0.5, |x: &Vector| x * 0.5).unwrap();
        assert!((half.gamma() - 0.75).abs() < 1e-15);
        let constant = promote_lipschitz("c", 1, 0.0, |_x: &Vector| array![3.0]).unwrap();
        assert!((constant.gamma() - 0.5).abs() < 1e-15);
        let steep = promote_lipschitz("0.99", 1, 0.99, |x: &Vector| x * 0.99).unwrap();
        assert!((steep.gamma() - 0.995).abs() < 1e-15);
        assert!(promote_lipschitz("bad", 1, 1.0, |x: &Vector| x.clone()).is_err());
    }

    #[test]
    fn estimate_gamma_halving_identity_and_expansive() {
        let est = estimate_gamma(|x| x * 0.5, 1, -10.0, 10.0, 10_000, 42).unwrap();
        match est {
            GammaEstimate::Certified(c) => {
                assert!((c.gamma - 0.75).abs() < 0.01, "got {}", c.gamma);
                assert_eq!(c.provenance, Provenance::NumericEstimate);
            }
            _ => panic!("x/2 must certify"),
        }

        let est = estimate_gamma(|x| x.clone(), 1, -10.0, 10.0, 1000, 42).unwrap();
        match est {
            GammaEstimate::Certified(c) => {
                assert!(c.gamma <= 1.0);
                let meta = c.estimate.unwrap();
                assert!((meta.lipschitz_estimate - 1.0).abs() < 1e-9);
            }
            _ => panic!("identity must certify"),
        }

        let est = estimate_gamma(|x| x * 2.0, 1, -10.0, 10.0, 1000, 42).unwrap();
        assert!(matches!(est, GammaEstimate::NotCertifiable { .. }));
    }

    #[test]
    fn promotion_certificate_verified_by_check() {
        // 0.5·sin is 1/2-Lipschitz; the promoted certificate 3/4 must pass
        // the sampled inequality.
        let op = promote_lipschitz("halfsin", 1, 0.5, |x: &Vector| x.mapv(|v| 0.5 * v.sin()))
            .unwrap();
        let pairs = sample_probe_pairs(1, -20.0, 20.0, 5000, 13);
        let rep = check_operator(&op, &pairs, 1e-9).unwrap();
        assert!(rep.pass, "worst violation {}", rep.worst_violation);
    }

    #[test]
    fn rotation_estimates_gamma_one() {
        // Plane rotation by 90°: nonexpansive, fixed only at 0, not averaged
        // for any gamma < 1.
        let rot = |x: &Vector| array![-x[1], x[0]];
        let est = estimate_gamma(rot, 2, -5.0, 5.0, 2000, 3).unwrap();
        match est {
            GammaEstimate::Certified(c) => assert!(c.gamma > 0.999, "got {}", c.gamma),
            _ => panic!("rotation is 1-averaged"),
        }
    }
}
