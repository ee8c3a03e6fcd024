//! Small dense linear-algebra helpers on top of `ndarray`.
//!
//! Everything here works on modest dimensions (the engine targets desk-scale
//! experiments), so the implementations favour determinism and clarity over
//! asymptotics: power iteration for operator norms, cyclic Jacobi for
//! symmetric eigenvalues, Gaussian elimination for the few small solves the
//! oracles need.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub type Vector = Array1<f64>;
pub type Matrix = Array2<f64>;

pub fn norm(v: &Vector) -> f64 {
    v.dot(v).sqrt()
}

pub fn dist(a: &Vector, b: &Vector) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn matrix_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Spectral norm ‖W‖₂ by power iteration on WᵀW.
///
/// Deterministic start vector; iterates until the Rayleigh quotient is
/// stationary to near machine precision. Exact on the zero matrix.
pub fn operator_norm(w: &Matrix) -> f64 {
    let (rows, cols) = w.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // Start from a fixed dense direction so repeated runs agree bitwise.
    let mut v: Vector = Array1::from_shape_fn(cols, |i| 1.0 + (i as f64) * 0.3141592653589793);
    let mut prev = 0.0_f64;
    for _ in 0..500 {
        let wv = w.dot(&v);
        let wtwv = w.t().dot(&wv);
        let n = norm(&wtwv);
        if n == 0.0 {
            return 0.0;
        }
        v = wtwv / n;
        let sigma2 = {
            let wv = w.dot(&v);
            wv.dot(&wv)
        };
        if (sigma2 - prev).abs() <= 1e-15 * sigma2.max(1.0) {
            return sigma2.sqrt();
        }
        prev = sigma2;
    }
    prev.sqrt()
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim(n, a.ncols(), "symmetric_eigenvalues expects square input"));
    }
    let mut m = a.clone();
    for sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + frobenius(&m)) || sweep == 99 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| m[[i, i]]).collect())
}

/// Condition number of a symmetric positive semidefinite matrix
/// (ratio of extreme eigenvalues; +inf when the smallest is <= 0).
pub fn spd_condition_number(a: &Matrix) -> Result<f64> {
    let eigs = symmetric_eigenvalues(a)?;
    let max = eigs.iter().cloned().fold(f64::MIN, f64::max);
    let min = eigs.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim(n, a.ncols(), "solve expects square matrix"));
    }
    if b.len() != n {
        return Err(Error::dim(n, b.len(), "solve rhs length"));
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() < 1e-300 {
            return Err(Error::InvalidInput("singular matrix in solve".into()));
        }
        if pivot != col {
            for k in 0..n {
                let tmp = m[[col, k]];
                m[[col, k]] = m[[pivot, k]];
                m[[pivot, k]] = tmp;
            }
            rhs.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let factor = m[[row, col]] / m[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= factor * m[[col, k]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    Ok(x)
}

/// Sum of f64 values in a canonical (value-sorted) order, so the result is
/// invariant under permutations of the inputs.
pub fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}
