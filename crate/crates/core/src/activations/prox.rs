//! Proximal potentials for the activations that have one in closed form.
//!
//! For a proper lsc convex f the proximal map is
//! prox_f(x) = argmin_y f(y) + ½(x−y)², and the activation it generates
//! satisfies r = ∇(½‖·‖² + f)*. Only potentials actually stated in closed
//! form are shipped — nothing is invented for the other rows:
//!
//! * `zero_potential` — f ≡ 0, prox = Id.
//! * `sigmoid_potential` — binary entropy minus ½y² on [0, 1], whose prox is
//!   the sigmoid itself.
//! * `centered_sigmoid_potential` — the same potential shifted to [−½, ½];
//!   its prox is the centered sigmoid x ↦ σ(x) − ½.
//! * `softsign_potential` — −|y| − log(1−|y|) − y²/2 on (−1, 1), whose prox
//!   is the softsign.
//!
//! `prox_eval` minimizes by golden-section search, independent of the
//! activation formulas, so prox/activation agreement is a two-route check.

use std::sync::Arc;

use serde::Serialize;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// An extended-real convex potential on an interval of ℝ.
/// Values outside `[lo, hi]` are +∞.
#[derive(Clone)]
pub struct ProxPotential {
    label: &'static str,
    lo: f64,
    hi: f64,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ProxPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ProxPotential({}, domain [{}, {}])", self.label, self.lo, self.hi)
    }
}

impl ProxPotential {
    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// f(y), +∞ outside the domain interval.
    pub fn value(&self, y: f64) -> f64 {
        if y < self.lo || y > self.hi {
            f64::INFINITY
        } else {
            (self.f)(y)
        }
    }

    /// Midpoint-convexity probe on sampled pairs inside the domain.
    pub fn is_midpoint_convex(&self, samples: usize, tol: f64) -> bool {
        let (lo, hi) = self.effective_bounds();
        let step = (hi - lo) / (samples as f64 + 1.0);
        for i in 0..samples {
            for j in (i + 1)..samples.min(i + 17) {
                let a = lo + step * (i as f64 + 1.0);
                let b = lo + step * (j as f64 + 1.0);
                let mid = self.value(0.5 * (a + b));
                let chord = 0.5 * (self.value(a) + self.value(b));
                if mid > chord + tol {
                    return false;
                }
            }
        }
        true
    }

    fn effective_bounds(&self) -> (f64, f64) {
        (self.lo.max(-1e8), self.hi.min(1e8))
    }
}

pub fn zero_potential() -> ProxPotential {
    ProxPotential {
        label: "zero",
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        f: Arc::new(|_| 0.0),
    }
}

/// y·ln y + (1−y)·ln(1−y) − y²/2 on [0, 1] (entropy limits at the ends).
pub fn sigmoid_potential() -> ProxPotential {
    ProxPotential {
        label: "sigmoid",
        lo: 0.0,
        hi: 1.0,
        f: Arc::new(|y| {
            let ent = xlogx(y) + xlogx(1.0 - y);
            ent - 0.5 * y * y
        }),
    }
}

/// The same potential written on [−½, ½]:
/// ((1+2y)/2)·ln((1+2y)/2) + ((1−2y)/2)·ln((1−2y)/2) − (4y²+1)/8,
/// with value −¼ at the endpoints. Its prox is σ(x) − ½.
pub fn centered_sigmoid_potential() -> ProxPotential {
    ProxPotential {
        label: "sigmoid-centered",
        lo: -0.5,
        hi: 0.5,
        f: Arc::new(|y| {
            let a = (1.0 + 2.0 * y) / 2.0;
            let b = (1.0 - 2.0 * y) / 2.0;
            xlogx(a) + xlogx(b) - (4.0 * y * y + 1.0) / 8.0
        }),
    }
}

/// −|y| − log(1−|y|) − y²/2 on (−1, 1), +∞ outside.
pub fn softsign_potential() -> ProxPotential {
    ProxPotential {
        label: "softsign",
        lo: -1.0 + 1e-15,
        hi: 1.0 - 1e-15,
        f: Arc::new(|y| {
            let a = y.abs();
            -a - (-a).ln_1p() - 0.5 * y * y
        }),
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// The closed-form potential generating an activation kind, when one exists.
pub fn potential_for_kind(kind: &ActivationKind) -> Option<ProxPotential> {
    match kind {
        ActivationKind::Identity => Some(zero_potential()),
        ActivationKind::Sigmoid => Some(sigmoid_potential()),
        ActivationKind::Softsign => Some(softsign_potential()),
        _ => None,
    }
}

/// prox_f(x) by golden-section search on f(y) + ½(x−y)².
///
/// The search bracket is the potential's domain; for unbounded domains it is
/// expanded around x until the objective rises at both ends.
pub fn prox_eval(f: &ProxPotential, x: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("prox_eval needs tol > 0, got {tol}")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("prox_eval input"));
    }
    let obj = |y: f64| f.value(y) + 0.5 * (x - y) * (x - y);
    let (mut lo, mut hi) = f.domain();
    if lo.is_infinite() || hi.is_infinite() {
        let mut radius = 1.0_f64.max(x.abs());
        loop {
            lo = (x - radius).max(f.domain().0);
            hi = (x + radius).min(f.domain().1);
            if obj(lo) >= obj(x.clamp(lo, hi)) && obj(hi) >= obj(x.clamp(lo, hi)) {
                break;
            }
            if radius > 1e12 {
                return Err(Error::InvalidInput(
                    "potential appears unbounded below; prox undefined".into(),
                ));
            }
            radius *= 4.0;
        }
    }
    Ok(golden_min(obj, lo, hi, tol.min(1e-10) * 1e-2))
}

fn golden_min(obj: impl Fn(f64) -> f64, mut a: f64, mut b: f64, width: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = obj(c);
    let mut fd = obj(d);
    for _ in 0..300 {
        if (b - a).abs() <= width {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = obj(d);
        }
    }
    0.5 * (a + b)
}

/// g(v) = (½‖·‖² + f)*(v) = sup_y [v·y − ½y² − f(y)], by golden-section
/// search over the domain. The objective is concave, so the search is exact
/// up to bracket width.
pub fn conjugate_value(f: &ProxPotential, v: f64) -> f64 {
    let neg = |y: f64| -(v * y - 0.5 * y * y - f.value(y));
    let (mut lo, mut hi) = f.domain();
    if lo.is_infinite() || hi.is_infinite() {
        // ½y² dominates any proper f eventually; bracket around the linear
        // coefficient.
        let r = 1.0_f64.max(2.0 * v.abs());
        lo = lo.max(v - r - 1.0);
        hi = hi.min(v + r + 1.0);
    }
    let y_star = golden_min(neg, lo, hi, 1e-12);
    v * y_star - 0.5 * y_star * y_star - f.value(y_star)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateGradReport {
    pub label: String,
    pub pass: bool,
    pub max_error: f64,
    pub points: Vec<(f64, f64, f64)>, // (x, finite-difference gradient, activation value)
}

/// Check ∇(½‖·‖² + f)* = r by central finite differences of the numerically
/// computed conjugate against the activation's closed form.
pub fn conjugate_grad_identity_check(
    kind: &ActivationKind,
    xs: &[f64],
    tol: f64,
) -> Result<ConjugateGradReport> {
    let f = potential_for_kind(kind).ok_or_else(|| {
        Error::Precondition(format!(
            "no closed-form potential for activation {}",
            kind.name()
        ))
    })?;
    let h = 1e-5;
    let mut max_error = 0.0_f64;
    let mut points = Vec::with_capacity(xs.len());
    for &x in xs {
        let grad = (conjugate_value(&f, x + h) - conjugate_value(&f, x - h)) / (2.0 * h);
        let r = kind.eval_scalar(x);
        max_error = max_error.max((grad - r).abs());
        points.push((x, grad, r));
    }
    Ok(ConjugateGradReport {
        label: kind.name().to_string(),
        pass: max_error <= tol,
        max_error,
        points,
    })
}
