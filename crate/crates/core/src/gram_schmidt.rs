//! Orthonormalization of empirical random variables by a projection network.
//!
//! Random variables are represented by their sample matrices (N draws of a
//! d-vector); the inner product is the empirical ⟨x, y⟩ = mean over draws of
//! the per-draw dot product, which makes every identity here algebraic
//! rather than statistical. Layer l of the network projects the still-raw
//! members onto the l-th orthogonalized one and subtracts; the final layer
//! normalizes. Re-running the network on its own output changes nothing:
//! all cross-projections vanish and the norms are already 1.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, spd_condition_number, Matrix, Vector};

/// Empirical representative of a vector-valued random variable:
/// `samples[(n, k)]` is component k of draw n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomVariableSample {
    pub samples: Matrix,
}

impl RandomVariableSample {
    pub fn new(samples: Matrix) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::Precondition("need at least 2 draws".into()));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("random variable sample"));
        }
        Ok(RandomVariableSample { samples })
    }

    pub fn draws(&self) -> usize {
        self.samples.nrows()
    }

    pub fn components(&self) -> usize {
        self.samples.ncols()
    }

    /// ⟨x, y⟩ = (1/N) Σ_n x_n · y_n.
    pub fn inner(&self, other: &RandomVariableSample) -> f64 {
        let n = self.draws() as f64;
        self.samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&self, c: f64) -> RandomVariableSample {
        RandomVariableSample { samples: &self.samples * c }
    }

    pub fn sub(&self, other: &RandomVariableSample) -> RandomVariableSample {
        RandomVariableSample { samples: &self.samples - &other.samples }
    }

    /// Per-component empirical mean, one value per column.
    pub fn mean(&self) -> Vector {
        let n = self.draws() as f64;
        let mut m: Vector = Array1::zeros(self.components());
        for row in self.samples.outer_iter() {
            m += &row;
        }
        m / n
    }
}

/// Projection of x_j onto span{x_i}:
/// P = (⟨x_j, x_i⟩ / ⟨x_i, x_i⟩) x_i. The residual x_j − P is orthogonal to
/// x_i by construction.
pub fn project(
    x_i: &RandomVariableSample,
    x_j: &RandomVariableSample,
) -> Result<RandomVariableSample> {
    let denom = x_i.inner(x_i);
    if denom <= 0.0 {
        return Err(Error::Precondition("projection onto a zero variable".into()));
    }
    let coeff = x_j.inner(x_i) / denom;
    Ok(x_i.scale(coeff))
}

/// A family of linearly independent random variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GsFamily {
    pub members: Vec<RandomVariableSample>,
}

/// Gram condition numbers above this are treated as numerically dependent.
const CONDITION_LIMIT: f64 = 1e12;

impl GsFamily {
    pub fn new(members: Vec<RandomVariableSample>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("family members"));
        }
        let (n, d) = (members[0].draws(), members[0].components());
        for m in &members {
            if m.draws() != n || m.components() != d {
                return Err(Error::dim(n * d, m.draws() * m.components(), "family member shape"));
            }
        }
        Ok(GsFamily { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn gram(&self) -> Matrix {
        let l = self.len();
        Array2::from_shape_fn((l, l), |(i, j)| self.members[i].inner(&self.members[j]))
    }

    /// Reject numerically dependent families (Gram condition number guard).
    pub fn check_independent(&self) -> Result<()> {
        let cond = spd_condition_number(&self.gram())?;
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::Precondition(format!(
                "family is numerically dependent: Gram condition number {cond:.3e}"
            )));
        }
        Ok(())
    }
}

/// Keep the first nonzero coefficient of each member positive, so outputs
/// are comparable across implementations (orthonormalization is otherwise
/// unique only up to sign).
fn fix_sign(v: RandomVariableSample) -> RandomVariableSample {
    for &entry in v.samples.iter() {
        if entry.abs() > 1e-12 {
            return if entry < 0.0 { v.scale(-1.0) } else { v };
        }
    }
    v
}

/// Run the projection network: layer l maps
/// (v_1, …, v_L) ↦ (v_1, …, v_l, v_{l+1} − P_{v_l}(v_{l+1}), …), and the
/// final layer normalizes each member. The output family is orthonormal.
pub fn gs_network_run(family: &GsFamily) -> Result<GsFamily> {
    family.check_independent()?;
    let mut v: Vec<RandomVariableSample> = family.members.clone();
    let l_count = v.len();
    for l in 0..l_count {
        for j in (l + 1)..l_count {
            let p = project(&v[l], &v[j])?;
            v[j] = v[j].sub(&p);
        }
    }
    let normalized = v
        .into_iter()
        .map(|u| {
            let n = u.norm();
            if n <= 0.0 {
                return Err(Error::Precondition("dependent family produced a zero residual".into()));
            }
            Ok(fix_sign(u.scale(1.0 / n)))
        })
        .collect::<Result<Vec<_>>>()?;
    GsFamily::new(normalized)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdempotenceReport {
    /// max entrywise |X₂ − X₁| between the first and second round.
    pub max_diff: f64,
    pub pass: bool,
}

/// Second-round invariance: orthonormalizing an orthonormal family returns
/// it unchanged.
pub fn idempotence_check(family: &GsFamily, tol: f64) -> Result<IdempotenceReport> {
    let x1 = gs_network_run(family)?;
    let x2 = gs_network_run(&x1)?;
    let mut max_diff = 0.0_f64;
    for (a, b) in x1.members.iter().zip(&x2.members) {
        for (u, w) in a.samples.iter().zip(b.samples.iter()) {
            max_diff = max_diff.max((u - w).abs());
        }
    }
    Ok(IdempotenceReport { max_diff, pass: max_diff <= tol })
}

/// Best linear predictor of y from x:
/// E[y] + Σ_{Y,X} Σ_{X,X}⁻¹ (x − E[x]), with empirical moments.
/// For one-component variables this is E[y] + (cov(y,x)/var(x))(x − E[x]).
pub fn best_linear_predictor(
    x: &RandomVariableSample,
    y: &RandomVariableSample,
) -> Result<RandomVariableSample> {
    if x.draws() != y.draws() {
        return Err(Error::dim(x.draws(), y.draws(), "paired draws"));
    }
    let n = x.draws();
    let dx = x.components();
    let dy = y.components();
    let mx = x.mean();
    let my = y.mean();
    // Σ_{X,X} (dx × dx) and Σ_{X,Y} (dx × dy), 1/N normalization.
    let mut sxx = Array2::zeros((dx, dx));
    let mut sxy = Array2::zeros((dx, dy));
    for r in 0..n {
        for a in 0..dx {
            let xa = x.samples[[r, a]] - mx[a];
            for b in 0..dx {
                sxx[[a, b]] += xa * (x.samples[[r, b]] - mx[b]);
            }
            for b in 0..dy {
                sxy[[a, b]] += xa * (y.samples[[r, b]] - my[b]);
            }
        }
    }
    sxx /= n as f64;
    sxy /= n as f64;
    let cond = spd_condition_number(&sxx)?;
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::Precondition(format!(
            "covariance of x is numerically singular (condition {cond:.3e})"
        )));
    }
    // B = Σ_XX⁻¹ Σ_XY, one solve per y-component.
    let mut beta = Array2::zeros((dx, dy));
    for b in 0..dy {
        let col = Array1::from_shape_fn(dx, |a| sxy[[a, b]]);
        let sol = solve(&sxx, &col)?;
        for a in 0..dx {
            beta[[a, b]] = sol[a];
        }
    }
    let mut out = Array2::zeros((n, dy));
    for r in 0..n {
        for b in 0..dy {
            let mut v = my[b];
            for a in 0..dx {
                v += (x.samples[[r, a]] - mx[a]) * beta[[a, b]];
            }
            out[[r, b]] = v;
        }
    }
    RandomVariableSample::new(out)
}
