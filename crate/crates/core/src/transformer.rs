//! Decoder building blocks and their fixed points.
//!
//! A block applies masked-softmax attention with residual heads, a residual
//! feedforward per token, and layer normalization per token:
//! x ↦ σ_n(σ_ff(σ_att(x))). Two masking conventions ship:
//!
//! * `PaperGlobal` — every lower-triangular entry is normalized by the sum
//!   of exponentials over *all* lower-triangular positions, so the whole
//!   matrix sums to 1;
//! * `Rowwise` — the standard causal softmax, each row summing to 1 over
//!   positions j ≤ i.
//!
//! Block maps are not assumed averaged: `decoder_fixpoint` measures a γ
//! estimate per block on a sampled box and runs the certified iteration only
//! when every block certifies; otherwise it iterates unchecked behind a
//! prominent warning.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::network::{
    default_lambda, km_iterate_operator, km_iterate_unchecked, IterationTrace, LambdaSchedule,
    LayerSpec,
};
use crate::operator::{compose_gamma, estimate_gamma, AveragedOperator, GammaEstimate};

/// Token matrix: rows are sequence positions, columns embedding dimensions.
pub type TokenMatrix = Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxMode {
    /// Normalize over the whole lower triangle (total mass 1).
    PaperGlobal,
    /// Normalize each row over positions j ≤ i.
    Rowwise,
}

/// Autoregressive masked softmax of a square score matrix.
pub fn masked_softmax(a: &Matrix, mode: SoftmaxMode) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim(n, a.ncols(), "masked_softmax expects a square matrix"));
    }
    let mut out = Array2::zeros((n, n));
    match mode {
        SoftmaxMode::PaperGlobal => {
            // Global max over the triangle keeps the exponentials in range
            // without changing the value.
            let mut m = f64::NEG_INFINITY;
            for i in 0..n {
                for j in 0..=i {
                    m = m.max(a[[i, j]]);
                }
            }
            let mut z = 0.0;
            for i in 0..n {
                for j in 0..=i {
                    z += (a[[i, j]] - m).exp();
                }
            }
            for i in 0..n {
                for j in 0..=i {
                    out[[i, j]] = (a[[i, j]] - m).exp() / z;
                }
            }
        }
        SoftmaxMode::Rowwise => {
            for i in 0..n {
                let mut m = f64::NEG_INFINITY;
                for j in 0..=i {
                    m = m.max(a[[i, j]]);
                }
                let mut z = 0.0;
                for j in 0..=i {
                    z += (a[[i, j]] - m).exp();
                }
                for j in 0..=i {
                    out[[i, j]] = (a[[i, j]] - m).exp() / z;
                }
            }
        }
    }
    Ok(out)
}

/// One attention head: query-key and output-value matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionHead {
    pub w_qk: Matrix,
    pub w_ov: Matrix,
}

impl AttentionHead {
    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, m) in [("w_qk", &self.w_qk), ("w_ov", &self.w_ov)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::dim(d, m.nrows().max(m.ncols()), format!("head matrix {name}")));
            }
        }
        Ok(())
    }

    /// softmax*(x ω_qk xᵀ) · x · ω_ovᵀ. The primes in the defining formula
    /// are read as transposes; this is the only dimension-consistent reading
    /// and is isolated here so a different one is a one-line change.
    pub fn apply(&self, x: &TokenMatrix, mode: SoftmaxMode) -> Result<TokenMatrix> {
        let scores = x.dot(&self.w_qk).dot(&x.t());
        let weights = masked_softmax(&scores, mode)?;
        Ok(weights.dot(x).dot(&self.w_ov.t()))
    }
}

/// Residual multi-head attention: x + Σ_heads head(x).
pub fn attention_layer(
    x: &TokenMatrix,
    heads: &[AttentionHead],
    mode: SoftmaxMode,
) -> Result<TokenMatrix> {
    let d = x.ncols();
    let mut out = x.clone();
    for h in heads {
        h.validate(d)?;
        out = out + h.apply(x, mode)?;
    }
    Ok(out)
}

/// Layer normalization with sample variance (n − 1 denominator):
/// out_i = ρ_i + ζ_i (x_i − x̄)/√(ν + ε).
pub fn layer_norm(x: &Vector, rho: &Vector, zeta: &Vector, eps: f64) -> Result<Vector> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "layer_norm needs at least 2 components, got {n}"
        )));
    }
    if rho.len() != n || zeta.len() != n {
        return Err(Error::dim(n, rho.len().min(zeta.len()), "layer_norm parameters"));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("layer_norm needs eps > 0, got {eps}")));
    }
    let mean = x.sum() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let denom = (var + eps).sqrt();
    Ok(Array1::from_shape_fn(n, |i| rho[i] + zeta[i] * (x[i] - mean) / denom))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormParams {
    pub rho: Vector,
    pub zeta: Vector,
    pub eps: f64,
}

/// One decoder block: attention heads, residual feedforward, normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderBlock {
    pub heads: Vec<AttentionHead>,
    /// σ_ff(row) = row + activation(W·row + b), applied per token.
    pub ff: LayerSpec,
    pub norm: NormParams,
    pub softmax_mode: SoftmaxMode,
}

impl DecoderBlock {
    pub fn validate(&self, d: usize) -> Result<()> {
        for h in &self.heads {
            h.validate(d)?;
        }
        if self.ff.input_dim() != d || self.ff.output_dim() != d {
            return Err(Error::dim(d, self.ff.input_dim(), "feedforward dims"));
        }
        if self.norm.rho.len() != d || self.norm.zeta.len() != d {
            return Err(Error::dim(d, self.norm.rho.len(), "norm parameter dims"));
        }
        if !(self.norm.eps > 0.0) {
            return Err(Error::Precondition("norm eps must be positive".into()));
        }
        Ok(())
    }

    /// σ_n ∘ σ_ff ∘ σ_att.
    pub fn apply(&self, x: &TokenMatrix) -> Result<TokenMatrix> {
        let after_att = attention_layer(x, &self.heads, self.softmax_mode)?;
        let mut out = Array2::zeros(after_att.dim());
        for (r, row) in after_att.outer_iter().enumerate() {
            let row = row.to_owned();
            let ff_out = &row + &self.ff.apply(&row);
            let normed = layer_norm(&ff_out, &self.norm.rho, &self.norm.zeta, self.norm.eps)?;
            for (c, v) in normed.iter().enumerate() {
                out[[r, c]] = *v;
            }
        }
        Ok(out)
    }
}

pub fn flatten(x: &TokenMatrix) -> Vector {
    Array1::from_iter(x.iter().cloned())
}

pub fn unflatten(v: &Vector, n_tokens: usize, d: usize) -> Result<TokenMatrix> {
    if v.len() != n_tokens * d {
        return Err(Error::dim(n_tokens * d, v.len(), "token matrix size"));
    }
    Ok(Array2::from_shape_vec((n_tokens, d), v.to_vec()).expect("length checked"))
}

#[derive(Debug, Clone, Serialize)]
pub struct DecoderFixpointReport {
    pub per_block_estimates: Vec<GammaEstimate>,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composed_gamma: Option<f64>,
    pub trace: IterationTrace,
}

/// Estimate each block's γ on a sampled box, then iterate the decoder.
///
/// When every block certifies, the composition certificate drives a
/// certified run with the default admissible λ. Otherwise the iteration is
/// unchecked and flagged, reporting the estimated Lipschitz constants.
#[allow(clippy::too_many_arguments)]
pub fn decoder_fixpoint(
    blocks: &[DecoderBlock],
    x0: &TokenMatrix,
    tol: f64,
    max_iter: usize,
    estimate_box: (f64, f64),
    estimate_samples: usize,
    seed: u64,
) -> Result<DecoderFixpointReport> {
    if blocks.is_empty() {
        return Err(Error::Empty("decoder blocks"));
    }
    let n_tokens = x0.nrows();
    let d = x0.ncols();
    for b in blocks {
        b.validate(d)?;
    }
    let dim = n_tokens * d;
    let mut estimates = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let block = block.clone();
        let est = estimate_gamma(
            move |v: &Vector| {
                let m = unflatten(v, n_tokens, d).expect("dims fixed");
                flatten(&block.apply(&m).expect("validated block"))
            },
            dim,
            estimate_box.0,
            estimate_box.1,
            estimate_samples,
            seed.wrapping_add(i as u64),
        )?;
        estimates.push(est);
    }
    let certified = estimates.iter().all(|e| e.certificate().is_some());

    let blocks_owned: Vec<DecoderBlock> = blocks.to_vec();
    let eval = move |v: &Vector| -> Result<Vector> {
        let mut m = unflatten(v, n_tokens, d)?;
        for b in &blocks_owned {
            m = b.apply(&m)?;
        }
        Ok(flatten(&m))
    };
    let x0_flat = flatten(x0);

    if certified {
        let gammas: Vec<f64> = estimates
            .iter()
            .map(|e| e.certificate().unwrap().gamma)
            .collect();
        let gamma = compose_gamma(&gammas);
        let cert = estimates[0].certificate().unwrap().clone();
        let mut composed_cert = cert;
        composed_cert.gamma = gamma;
        let op = AveragedOperator::new("decoder", dim, dim, composed_cert, move |v: &Vector| {
            eval(v).expect("decoder evaluation")
        });
        let schedule = LambdaSchedule::constant(default_lambda(gamma));
        let trace = km_iterate_operator(&op, &x0_flat, &schedule, tol, max_iter)?;
        Ok(DecoderFixpointReport {
            per_block_estimates: estimates,
            certified: true,
            composed_gamma: Some(gamma),
            trace,
        })
    } else {
        let schedule = LambdaSchedule::constant(0.5);
        let trace = km_iterate_unchecked(eval, &x0_flat, &schedule, tol, max_iter)?;
        Ok(DecoderFixpointReport {
            per_block_estimates: estimates,
            certified: false,
            composed_gamma: None,
            trace,
        })
    }
}

/// Finite-difference probe of how fast the attention Jacobian varies along
/// a segment (reported, not asserted: a bounded value is consistent with a
/// continuously differentiable map).
pub fn attention_jacobian_variation(
    heads: &[AttentionHead],
    mode: SoftmaxMode,
    from: &TokenMatrix,
    to: &TokenMatrix,
    steps: usize,
) -> Result<f64> {
    let n = from.nrows();
    let d = from.ncols();
    let dim = n * d;
    let h = 1e-5;
    let jac = |point: &Vector| -> Result<Vec<Vector>> {
        let mut cols = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut plus = point.clone();
            let mut minus = point.clone();
            plus[k] += h;
            minus[k] -= h;
            let fp = flatten(&attention_layer(&unflatten(&plus, n, d)?, heads, mode)?);
            let fm = flatten(&attention_layer(&unflatten(&minus, n, d)?, heads, mode)?);
            cols.push((fp - fm) / (2.0 * h));
        }
        Ok(cols)
    };
    let a = flatten(from);
    let b = flatten(to);
    let mut prev = jac(&a)?;
    let mut max_rate = 0.0_f64;
    for s in 1..=steps {
        let t = s as f64 / steps as f64;
        let point = Array1::from_shape_fn(dim, |i| a[i] * (1.0 - t) + b[i] * t);
        let cur = jac(&point)?;
        let mut diff = 0.0;
        for (p, c) in prev.iter().zip(&cur) {
            diff += crate::linalg::dist(p, c).powi(2);
        }
        let seg = crate::linalg::dist(&a, &b) / steps as f64;
        if seg > 0.0 {
            max_rate = max_rate.max(diff.sqrt() / seg);
        }
        prev = cur;
    }
    Ok(max_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{make_activation, ActivationKind};
    use ndarray::array;

    #[test]
    fn masked_softmax_two_by_two_zero() {
        let a = Array2::zeros((2, 2));
        let global = masked_softmax(&a, SoftmaxMode::PaperGlobal).unwrap();
        let third = 1.0 / 3.0;
        assert!((global[[0, 0]] - third).abs() < 1e-15);
        assert_eq!(global[[0, 1]], 0.0);
        assert!((global[[1, 0]] - third).abs() < 1e-15);
        assert!((global[[1, 1]] - third).abs() < 1e-15);
        assert!((global.sum() - 1.0).abs() < 1e-12);

        let rowwise = masked_softmax(&a, SoftmaxMode::Rowwise).unwrap();
        assert_eq!(rowwise[[0, 0]], 1.0);
        assert_eq!(rowwise[[0, 1]], 0.0);
        assert!((rowwise[[1, 0]] - 0.5).abs() < 1e-15);
        assert!((rowwise[[1, 1]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn masked_softmax_one_by_one() {
        let a = array![[123.0]];
        for mode in [SoftmaxMode::PaperGlobal, SoftmaxMode::Rowwise] {
            let s = masked_softmax(&a, mode).unwrap();
            assert_eq!(s[[0, 0]], 1.0);
        }
    }

    #[test]
    fn masked_softmax_row_sums() {
        let a = array![[0.3, -2.0, 5.0], [1.0, 0.2, -0.4], [4.0, 4.0, 4.0]];
        let r = masked_softmax(&a, SoftmaxMode::Rowwise).unwrap();
        for i in 0..3 {
            let s: f64 = (0..3).map(|j| r[[i, j]]).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in (i + 1)..3 {
                assert_eq!(r[[i, j]], 0.0);
            }
        }
        let g = masked_softmax(&a, SoftmaxMode::PaperGlobal).unwrap();
        assert!((g.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_heads_is_identity_and_zero_weights_contribute_nothing() {
        let x = array![[0.4, -1.0], [2.0, 0.1], [0.0, 3.0]];
        let out = attention_layer(&x, &[], SoftmaxMode::PaperGlobal).unwrap();
        assert_eq!(out, x);

        let zero_head = AttentionHead { w_qk: Array2::zeros((2, 2)), w_ov: Array2::zeros((2, 2)) };
        let out = attention_layer(&x, &[zero_head], SoftmaxMode::PaperGlobal).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn two_identical_heads_double_the_contribution() {
        let x = array![[0.4, -1.0], [2.0, 0.1]];
        let head = AttentionHead {
            w_qk: array![[0.3, 0.1], [-0.2, 0.5]],
            w_ov: array![[1.0, 0.0], [0.3, -0.4]],
        };
        let one = attention_layer(&x, &[head.clone()], SoftmaxMode::Rowwise).unwrap();
        let two = attention_layer(&x, &[head.clone(), head.clone()], SoftmaxMode::Rowwise).unwrap();
        let single = head.apply(&x, SoftmaxMode::Rowwise).unwrap();
        let expected = &one + &single;
        for (a, b) in two.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn layer_norm_hand_example() {
        let out = layer_norm(&array![1.0, 3.0], &array![0.0, 0.0], &array![1.0, 1.0], 1e-12)
            .unwrap();
        assert!((out[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        assert!((out[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        // mean is zero with rho = 0, zeta = 1
        assert!(out.sum().abs() < 1e-12);
    }

    #[test]
    fn layer_norm_degenerate_and_gated_cases() {
        let c = layer_norm(&array![2.0, 2.0], &array![0.5, -0.5], &array![1.0, 1.0], 1e-6).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12);
        assert!((c[1] + 0.5).abs() < 1e-12);

        let z = layer_norm(&array![1.0, 9.0], &array![0.3, 0.3], &array![0.0, 0.0], 1e-6).unwrap();
        assert_eq!(z, array![0.3, 0.3]);

        assert!(layer_norm(&array![1.0], &array![0.0], &array![1.0], 1e-6).is_err());
    }

    fn small_block(scale: f64, eps: f64) -> DecoderBlock {
        let d = 3;
        let tanh = make_activation(ActivationKind::TanhScaled { lambda: 0.5 }).unwrap();
        let ff = LayerSpec::new(
            Array2::from_shape_fn((d, d), |(i, j)| scale * (0.2 + 0.1 * (i as f64 - j as f64))),
            Array1::from_elem(d, 0.05 * scale),
            tanh,
        )
        .unwrap();
        DecoderBlock {
            heads: vec![AttentionHead {
                w_qk: Array2::from_shape_fn((d, d), |(i, j)| scale * (0.1 + 0.05 * ((i + j) as f64))),
                w_ov: Array2::from_shape_fn((d, d), |(i, j)| scale * (0.08 - 0.03 * (i as f64 * j as f64))),
            }],
            ff,
            norm: NormParams {
                rho: Array1::zeros(d),
                zeta: Array1::from_elem(d, 1.0),
                eps,
            },
            softmax_mode: SoftmaxMode::PaperGlobal,
        }
    }

    #[test]
    fn constant_block_finds_zero_fixed_point_in_one_step() {
        // All-zero weights with zeta = 0 collapse the block to the constant
        // map rho = 0.
        let d = 3;
        let id = make_activation(ActivationKind::Identity).unwrap();
        let ff = LayerSpec::new(Array2::zeros((d, d)), Array1::zeros(d), id).unwrap();
        let block = DecoderBlock {
            heads: vec![AttentionHead { w_qk: Array2::zeros((d, d)), w_ov: Array2::zeros((d, d)) }],
            ff,
            norm: NormParams { rho: Array1::zeros(d), zeta: Array1::zeros(d), eps: 1.0 },
            softmax_mode: SoftmaxMode::PaperGlobal,
        };
        let x0 = array![[1.0, -2.0, 0.5], [0.3, 0.0, 4.0]];
        let report = decoder_fixpoint(&[block], &x0, 1e-10, 100, (-2.0, 2.0), 400, 5).unwrap();
        assert!(report.certified);
        assert!(report.trace.converged);
        let last = report.trace.final_iterate();
        assert!(last.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn small_weights_certify_large_weights_do_not() {
        let x0 = array![[0.2, -0.1, 0.4], [0.0, 0.3, -0.2]];
        let small = small_block(1e-3, 4.0);
        let report =
            decoder_fixpoint(&[small.clone()], &x0, 1e-8, 200_000, (-2.0, 2.0), 800, 11).unwrap();
        assert!(report.certified, "estimates {:?}", report.per_block_estimates);
        assert!(report.trace.converged);
        assert!(report.trace.final_residual().unwrap() <= 1e-8);

        // Per-block game form at the fixed point: each block's output is the
        // block map of the previous block's output, and the chain closes.
        let fixed = unflatten(report.trace.final_iterate(), 2, 3).unwrap();
        let once = small.apply(&fixed).unwrap();
        let closure: f64 = (&once - &fixed).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(closure <= 1e-8, "block-chain closure residual {closure}");

        let large = small_block(10.0, 1e-6);
        let report =
            decoder_fixpoint(&[large], &x0, 1e-8, 100, (-2.0, 2.0), 800, 11).unwrap();
        assert!(!report.certified);
        assert!(matches!(
            report.per_block_estimates[0],
            GammaEstimate::NotCertifiable { .. }
        ));
        assert!(!report.trace.warnings.is_empty());
    }

    #[test]
    fn jacobian_variation_probe_is_finite() {
        let head = AttentionHead {
            w_qk: array![[0.2, 0.0], [0.1, 0.3]],
            w_ov: array![[0.5, -0.1], [0.0, 0.2]],
        };
        let from = array![[0.1, 0.2], [0.3, -0.1]];
        let to = array![[-0.2, 0.4], [0.0, 0.25]];
        let rate = attention_jacobian_variation(&[head], SoftmaxMode::Rowwise, &from, &to, 4)
            .unwrap();
        assert!(rate.is_finite());
    }
}
