use proptest::prelude::*;

use qengine::numerics::{expm, kron};
use qengine::statistics::{analytic_current, report_for};
use qengine::{ComplexMatrix, DensityMatrix, EngineModel, EngineParams, C64};

fn params() -> impl Strategy<Value = EngineParams> {
    (0.02f64..5.0, 0.02f64..5.0, 0.0f64..4.0, 0.0f64..2.0, 0.05f64..1.5, 0.05f64..1.5).prop_map(
        |(kh, kc, n_h, n_c, lh, lc)| {
            let base = EngineParams::baseline();
            EngineParams {
                kappa_h: kh * base.e_j,
                kappa_c: kc * base.e_j,
                n_h,
                n_c,
                lambda_h: lh,
                lambda_c: lc,
                ..base
            }
        },
    )
}

fn state_vector() -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4).prop_filter_map("nonzero", |v| {
        let psi: Vec<C64> = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (norm > 1e-3).then(|| psi.into_iter().map(|z| z / norm).collect())
    })
}

fn matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
        let data = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
        ComplexMatrix::from_row_major(n, n, data).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steady_flows_balance(p in params()) {
        let model = EngineModel::new(p).unwrap();
        let r = report_for(&model).unwrap();
        prop_assert!(r.energy_balance_error() <= 1e-10, "energy {}", r.energy_balance_error());
        prop_assert!(r.quanta_rate_error() <= 1e-10, "quanta {}", r.quanta_rate_error());
        prop_assert!((0.0..=1.0).contains(&r.pop_hot) && (0.0..=1.0).contains(&r.pop_cold));
        // current flows from the hotter bath
        prop_assert!(r.mean_current * (p.n_h - p.n_c) >= -1e-14);
    }

    #[test]
    fn equal_couplings_follow_closed_form(p in params()) {
        let p = EngineParams { kappa_c: p.kappa_h, ..p };
        let r = report_for(&EngineModel::new(p).unwrap()).unwrap();
        let closed = analytic_current(&p).unwrap();
        prop_assert!((r.mean_current - closed).abs() <= 1e-10 * closed.abs().max(1e-300));
    }

    #[test]
    fn propagation_preserves_states(p in params(), psi in state_vector(), t in 0.0f64..40.0) {
        let model = EngineModel::new(p).unwrap();
        let rho = model.liouvillian.propagate(&DensityMatrix::pure(&psi), t).unwrap();
        prop_assert!(rho.check(1e-10, 1e-10, 1e-9).is_ok());
    }

    #[test]
    fn kron_is_bilinear(a in matrix(2), b in matrix(2), c in matrix(2), s in -2.0f64..2.0) {
        let sum = ComplexMatrix::from_fn(2, 2, |i, j| a[(i, j)] + b[(i, j)].scale(s));
        let lhs = kron(&sum, &c);
        let rhs_a = kron(&a, &c);
        let rhs_b = kron(&b, &c);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((lhs[(i, j)] - rhs_a[(i, j)] - rhs_b[(i, j)].scale(s)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exponential_composes(a in matrix(4), s in 0.0f64..1.5, t in 0.0f64..1.5) {
        let joint = expm(&a, s + t).unwrap();
        let split = expm(&a, s).unwrap().matmul(&expm(&a, t).unwrap());
        let scale = joint.max_abs().max(1.0);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((joint[(i, j)] - split[(i, j)]).norm() <= 1e-10 * scale);
            }
        }
    }
}
