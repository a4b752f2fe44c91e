//! Matrix exponential `e^{a·t}`.
//!
//! When the eigenvector matrix of `a` is well conditioned the exponential is
//! assembled from the eigendecomposition, which also makes evaluating many
//! delays cheap. Otherwise the degree-13 Padé approximant with scaling and
//! squaring (Higham 2005) is used.

use super::{eig, ComplexMatrix, Lu, C64};
use crate::error::{EngineError, Result};

/// Above this 1-norm condition number of the eigenvector matrix the Padé
/// path is taken.
pub const EIG_CONDITION_LIMIT: f64 = 1e8;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Precomputed strategy for evaluating `e^{a·t}` at many `t`.
#[derive(Debug, Clone)]
pub enum ExpmPlan {
    Spectral {
        values: Vec<C64>,
        vectors: ComplexMatrix,
        inverse: ComplexMatrix,
        condition: f64,
    },
    Pade {
        generator: ComplexMatrix,
        condition: Option<f64>,
    },
}

impl ExpmPlan {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(EngineError::Dimension(format!(
                "expm of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let fallback = |condition| ExpmPlan::Pade {
            generator: a.clone(),
            condition,
        };
        let Ok(e) = eig(a) else {
            return Ok(fallback(None));
        };
        let Ok(lu) = Lu::new(&e.vectors) else {
            return Ok(fallback(Some(f64::INFINITY)));
        };
        let inverse = lu.inverse();
        let condition = e.vectors.norm_1() * inverse.norm_1();
        if !condition.is_finite() || condition > EIG_CONDITION_LIMIT {
            return Ok(fallback(Some(condition)));
        }
        Ok(ExpmPlan::Spectral {
            values: e.values,
            vectors: e.vectors,
            inverse,
            condition,
        })
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, ExpmPlan::Spectral { .. })
    }

    pub fn eval(&self, t: f64) -> Result<ComplexMatrix> {
        if !t.is_finite() {
            return Err(EngineError::breakdown("expm", format!("non-finite time {t}")));
        }
        match self {
            ExpmPlan::Spectral {
                values,
                vectors,
                inverse,
                ..
            } => {
                let n = values.len();
                let exps: Vec<C64> = values.iter().map(|l| (l * t).exp()).collect();
                let scaled = ComplexMatrix::from_fn(n, n, |i, j| vectors[(i, j)] * exps[j]);
                let out = scaled.matmul(inverse);
                check_finite(&out)?;
                Ok(out)
            }
            ExpmPlan::Pade { generator, .. } => expm_pade(&generator.scale_real(t)),
        }
    }

    /// `e^{a·t}·v` without forming the full exponential when possible.
    pub fn apply(&self, t: f64, v: &[C64]) -> Result<Vec<C64>> {
        match self {
            ExpmPlan::Spectral {
                values,
                vectors,
                inverse,
                ..
            } => {
                if !t.is_finite() {
                    return Err(EngineError::breakdown("expm", format!("non-finite time {t}")));
                }
                let mut coeff = inverse.matvec(v);
                for (cf, l) in coeff.iter_mut().zip(values) {
                    *cf *= (l * t).exp();
                }
                Ok(vectors.matvec(&coeff))
            }
            ExpmPlan::Pade { .. } => Ok(self.eval(t)?.matvec(v)),
        }
    }
}

/// `e^{a·t}`.
pub fn expm(a: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    ExpmPlan::new(a)?.eval(t)
}

/// Scaling-and-squaring Padé(13) exponential of `a`.
pub fn expm_pade(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(EngineError::Dimension("expm of a non-square matrix".into()));
    }
    check_finite(a)?;
    let n = a.rows();
    let norm = a.norm_1();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if s > 1000 {
        return Err(EngineError::breakdown("expm", format!("norm {norm:e} too large")));
    }
    let a = a.scale_real(0.5f64.powi(s));
    let id = ComplexMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = |k: usize| PADE13[k];

    let lin = |m: &[(&ComplexMatrix, f64)]| {
        m.iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, (x, w)| &acc + &x.scale_real(*w))
    };
    let u_inner = &(&a6 * &lin(&[(&a6, b(13)), (&a4, b(11)), (&a2, b(9))]))
        + &lin(&[(&a6, b(7)), (&a4, b(5)), (&a2, b(3)), (&id, b(1))]);
    let u = &a * &u_inner;
    let v = &(&a6 * &lin(&[(&a6, b(12)), (&a4, b(10)), (&a2, b(8))]))
        + &lin(&[(&a6, b(6)), (&a4, b(4)), (&a2, b(2)), (&id, b(0))]);

    let p = &v + &u;
    let q = &v - &u;
    let lu = Lu::new(&q)
        .map_err(|e| EngineError::breakdown("expm", format!("Padé denominator: {e}")))?;
    let mut r = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let col = lu.solve(&p.column(j));
        for (i, z) in col.into_iter().enumerate() {
            r[(i, j)] = z;
        }
    }
    for _ in 0..s {
        r = &r * &r;
    }
    check_finite(&r)?;
    Ok(r)
}

fn check_finite(m: &ComplexMatrix) -> Result<()> {
    if m.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::breakdown("expm", "non-finite result"))
    }
}

#[cfg(test)]
mod tests {
    use super::super::c;
    use super::super::testing::random_matrix;
    use super::*;

    #[test]
    fn zero_generator_gives_identity() {
        let z = ComplexMatrix::zeros(4, 4);
        assert_eq!(expm(&z, 3.0).unwrap(), ComplexMatrix::identity(4));
        assert!((&expm_pade(&z).unwrap() - &ComplexMatrix::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_generator() {
        let a = ComplexMatrix::diag_real(&[-1.0, -2.0]);
        let e = expm(&a, 1.0).unwrap();
        let expected = ComplexMatrix::diag_real(&[(-1.0f64).exp(), (-2.0f64).exp()]);
        assert!((&e - &expected).norm_fro() <= 1e-10 * expected.norm_fro());
    }

    #[test]
    fn semigroup_property() {
        for seed in 0..10 {
            let a = random_matrix(4, seed);
            let (t1, t2) = (0.37, 1.21);
            let lhs = expm(&a, t1 + t2).unwrap();
            let rhs = &expm(&a, t1).unwrap() * &expm(&a, t2).unwrap();
            assert!((&lhs - &rhs).norm_fro() <= 1e-10 * lhs.norm_fro(), "seed {seed}");
        }
    }

    #[test]
    fn spectral_and_pade_agree() {
        for seed in 0..10 {
            let a = random_matrix(16, seed).scale_real(0.8);
            let plan = ExpmPlan::new(&a).unwrap();
            assert!(plan.is_spectral());
            let s = plan.eval(2.0).unwrap();
            let p = expm_pade(&a.scale_real(2.0)).unwrap();
            assert!((&s - &p).norm_fro() <= 1e-10 * p.norm_fro(), "seed {seed}");
        }
    }

    #[test]
    fn defective_matrix_takes_pade_path() {
        let a = ComplexMatrix::from_real_rows(&[&[-1.0, 1.0], &[0.0, -1.0]]);
        let plan = ExpmPlan::new(&a).unwrap();
        assert!(!plan.is_spectral());
        let e = plan.eval(2.0).unwrap();
        let d = (-2.0f64).exp();
        assert!((e[(0, 0)] - c(d, 0.0)).norm() < 1e-14);
        assert!((e[(0, 1)] - c(2.0 * d, 0.0)).norm() < 1e-14);
        assert!(e[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn apply_matches_eval() {
        let a = random_matrix(5, 77);
        let plan = ExpmPlan::new(&a).unwrap();
        let v: Vec<C64> = (0..5).map(|i| c(i as f64, -1.0)).collect();
        let full = plan.eval(0.9).unwrap().matvec(&v);
        let direct = plan.apply(0.9, &v).unwrap();
        for (x, y) in full.iter().zip(&direct) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn large_norm_rotation() {
        // e^{θJ} with J the 2x2 rotation generator, large θ exercises squaring
        let j = ComplexMatrix::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let theta = 100.0;
        let e = expm_pade(&j.scale_real(theta)).unwrap();
        assert!((e[(0, 0)].re - theta.cos()).abs() < 1e-11);
        assert!((e[(1, 0)].re - theta.sin()).abs() < 1e-11);
    }

    #[test]
    fn non_finite_time_is_breakdown() {
        let a = random_matrix(3, 1);
        assert!(matches!(
            expm(&a, f64::NAN),
            Err(EngineError::NumericalBreakdown { .. })
        ));
    }
}
