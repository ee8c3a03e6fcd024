//! Property tests for the structural invariants.

use fixnet::activations::{
    make_activation, prox_eval, sigmoid_potential, softsign_potential, ActivationKind,
};
use fixnet::equilibrium::ConvexSet;
use fixnet::linalg::Vector;
use fixnet::operator::{check_averaged, weighted_sum, AveragedOperator, GammaCertificate};
use fixnet::training::{AffineLift, Theta};
use fixnet::transformer::{masked_softmax, SoftmaxMode};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

fn vec_strategy(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, dim)
}

proptest! {
    /// The identity satisfies the averagedness inequality with equality for
    /// every gamma, so the check must pass at any gamma in (0, 1].
    #[test]
    fn identity_passes_every_gamma(gamma in 0.01f64..=1.0, xs in vec_strategy(3, -50.0, 50.0), ys in vec_strategy(3, -50.0, 50.0)) {
        let pairs = vec![(Array1::from_vec(xs), Array1::from_vec(ys))];
        let report = check_averaged("id", |x: &Vector| x.clone(), 3, 3, gamma, &pairs, 1e-9).unwrap();
        prop_assert!(report.pass);
    }

    /// Any map with a sampled difference quotient above 1 must fail the
    /// check at every gamma (averaged implies nonexpansive).
    #[test]
    fn expansive_maps_fail_every_gamma(gamma in 0.05f64..=1.0, a in 1.05f64..4.0) {
        let pairs = vec![(array![0.0], array![1.0])];
        let report = check_averaged("ax", |x: &Vector| x * a, 1, 1, gamma, &pairs, 1e-9).unwrap();
        prop_assert!(!report.pass);
        prop_assert!(report.witness.is_some());
    }

    /// Convex-combination evaluation is invariant under permuting the
    /// operand list, bit for bit.
    #[test]
    fn weighted_sum_permutation_invariance(w0 in 0.05f64..0.9, x in -5.0f64..5.0) {
        let w1 = 1.0 - w0;
        let mk = |c: f64| AveragedOperator::new(
            format!("m{c}"),
            1,
            1,
            GammaCertificate::derived(1.0).unwrap(),
            move |v: &Vector| v * c + c,
        );
        let fwd = weighted_sum(vec![mk(0.3), mk(-0.7)], vec![w0, w1]).unwrap();
        let rev = weighted_sum(vec![mk(-0.7), mk(0.3)], vec![w1, w0]).unwrap();
        let a = fwd.apply(&array![x]).unwrap();
        let b = rev.apply(&array![x]).unwrap();
        prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    /// prox of the sigmoid potential stays in (0, 1) and is monotone; prox
    /// of the softsign potential stays in (−1, 1) and is odd.
    #[test]
    fn prox_ranges_and_monotonicity(x in -15.0f64..15.0, dx in 0.01f64..2.0) {
        let f4 = sigmoid_potential();
        let p_mid = prox_eval(&f4, x, 1e-9).unwrap();
        let p_right = prox_eval(&f4, x + dx, 1e-9).unwrap();
        prop_assert!((0.0..=1.0).contains(&p_mid));
        prop_assert!(p_right + 1e-7 >= p_mid);

        let f23 = softsign_potential();
        let q = prox_eval(&f23, x, 1e-9).unwrap();
        let q_neg = prox_eval(&f23, -x, 1e-9).unwrap();
        prop_assert!(q.abs() < 1.0);
        prop_assert!((q + q_neg).abs() < 1e-6);
    }

    /// Both masking conventions zero the strict upper triangle and carry
    /// unit mass (per matrix / per row).
    #[test]
    fn masked_softmax_mass(entries in vec_strategy(9, -30.0, 30.0)) {
        let a = Array2::from_shape_vec((3, 3), entries).unwrap();
        let g = masked_softmax(&a, SoftmaxMode::PaperGlobal).unwrap();
        prop_assert!((g.sum() - 1.0).abs() < 1e-12);
        let r = masked_softmax(&a, SoftmaxMode::Rowwise).unwrap();
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| r[[i, j]]).sum();
            prop_assert!((row - 1.0).abs() < 1e-12);
            for j in (i + 1)..3 {
                prop_assert_eq!(g[[i, j]], 0.0);
                prop_assert_eq!(r[[i, j]], 0.0);
            }
        }
    }

    /// Projectors are idempotent and nonexpansive on samples.
    #[test]
    fn projectors_idempotent_nonexpansive(
        xs in vec_strategy(2, -10.0, 10.0),
        ys in vec_strategy(2, -10.0, 10.0),
        r in 0.1f64..3.0,
    ) {
        let x = Array1::from_vec(xs);
        let y = Array1::from_vec(ys);
        let sets = vec![
            ConvexSet::Box { lo: array![-1.0, 0.0], hi: array![2.0, 1.5] },
            ConvexSet::Ball { center: array![0.5, -0.5], radius: r },
            ConvexSet::Halfspace { normal: array![1.0, -2.0], min_value: 0.3 },
        ];
        for s in &sets {
            let px = s.project(&x);
            let ppx = s.project(&px);
            let d: f64 = (&px - &ppx).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(d <= 1e-12);
            let py = s.project(&y);
            let dp: f64 = (&px - &py).iter().map(|v| v * v).sum::<f64>().sqrt();
            let dxy: f64 = (&x - &y).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(dp <= dxy + 1e-12);
        }
    }

    /// ⟨Aθ, z⟩ = ⟨θ, A†z⟩ for the affine lift.
    #[test]
    fn adjoint_identity(
        xs in vec_strategy(3, -5.0, 5.0),
        ws in vec_strategy(6, -5.0, 5.0),
        bs in vec_strategy(2, -5.0, 5.0),
        zs in vec_strategy(2, -5.0, 5.0),
    ) {
        let lift = AffineLift::new(Array1::from_vec(xs));
        let theta = Theta {
            weight: Array2::from_shape_vec((2, 3), ws).unwrap(),
            bias: Array1::from_vec(bs),
        };
        let z = Array1::from_vec(zs);
        let lhs = lift.apply(&theta).dot(&z);
        let rhs = theta.dot(&lift.adjoint(&z));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn scalar_activations_certified_rows_are_nonexpansive() {
    // Every 1-averaged row must satisfy plain nonexpansiveness on samples.
    for kind in ActivationKind::default_catalog() {
        let spec = make_activation(kind.clone()).unwrap();
        if spec.gamma_value() == Some(1.0) {
            let dim = match kind.arity() {
                fixnet::activations::Arity::Scalar => 1,
                _ => 4,
            };
            let pairs = fixnet::operator::sample_probe_pairs(dim, -20.0, 20.0, 2000, 77);
            for (x, y) in &pairs {
                let dx = {
                    let d = x - y;
                    d.dot(&d).sqrt()
                };
                let (ox, oy) = (kind.apply(x), kind.apply(y));
                let do_ = {
                    let d = &ox - &oy;
                    d.dot(&d).sqrt()
                };
                assert!(
                    do_ <= dx + 1e-9,
                    "{} expands a pair: {do_} > {dx}",
                    kind.name()
                );
            }
        }
    }
}
