use super::{vec_norm, ComplexMatrix, C64};
use crate::error::{EngineError, Result};

/// Pivots smaller than this fraction of the largest entry count as zero.
const SINGULAR_RTOL: f64 = 1e-12;

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(EngineError::Dimension(format!(
                "LU of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let scale = a.max_abs();
        if scale == 0.0 {
            return Err(EngineError::NonUniqueSolution("matrix is zero".into()));
        }
        let tol = SINGULAR_RTOL * scale * n as f64;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tol {
                return Err(EngineError::NonUniqueSolution(format!(
                    "pivot {pmax:.3e} in column {k} below {tol:.3e}"
                )));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                y[i] = y[i] - l * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                y[i] = y[i] - u * y[j];
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> ComplexMatrix {
        let n = self.lu.rows();
        let mut inv = ComplexMatrix::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        inv
    }
}

/// Solves `a·x = b` for square nonsingular `a`.
pub fn solve(a: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    Ok(Lu::new(a)?.solve(b))
}

/// Solution of a bordered (constrained) system.
#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub x: Vec<C64>,
    /// Row of `a` that was replaced by the constraint.
    pub replaced_row: usize,
    /// `‖a·x − rhs‖₂` over *all* rows, including the replaced one.
    pub residual: f64,
    /// `|constraint_row·x − constraint_value|`.
    pub constraint_residual: f64,
}

impl BorderedSolution {
    /// Whether the dropped equation is also satisfied, i.e. the original
    /// system and the constraint are jointly consistent.
    pub fn is_consistent(&self, tol: f64) -> bool {
        self.residual <= tol && self.constraint_residual <= tol
    }
}

/// Solves `a·x = rhs` subject to `constraint_row·x = constraint_value` by
/// replacing one row of `a` with the constraint.
///
/// Rows are tried in order and the first replacement giving a nonsingular
/// system is used. If none does, the constrained solution is not unique.
pub fn solve_bordered(
    a: &ComplexMatrix,
    constraint_row: &[C64],
    constraint_value: C64,
    rhs: &[C64],
) -> Result<BorderedSolution> {
    check_bordered_dims(a, constraint_row, rhs)?;
    let mut last_err = None;
    for row in 0..a.rows() {
        match solve_bordered_replacing(a, row, constraint_row, constraint_value, rhs) {
            Ok(sol) => return Ok(sol),
            Err(e @ EngineError::NonUniqueSolution(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| EngineError::NonUniqueSolution("empty system".into())))
}

/// Like [`solve_bordered`] with an explicit choice of replaced row.
pub fn solve_bordered_replacing(
    a: &ComplexMatrix,
    row: usize,
    constraint_row: &[C64],
    constraint_value: C64,
    rhs: &[C64],
) -> Result<BorderedSolution> {
    check_bordered_dims(a, constraint_row, rhs)?;
    if row >= a.rows() {
        return Err(EngineError::Dimension(format!("row {row} out of range")));
    }
    let mut system = a.clone();
    system.set_row(row, constraint_row);
    let mut b = rhs.to_vec();
    b[row] = constraint_value;
    let x = Lu::new(&system)?.solve(&b);

    let ax = a.matvec(&x);
    let diff: Vec<C64> = ax.iter().zip(rhs).map(|(l, r)| l - r).collect();
    let cx: C64 = constraint_row.iter().zip(&x).map(|(p, q)| p * q).sum();
    Ok(BorderedSolution {
        residual: vec_norm(&diff),
        constraint_residual: (cx - constraint_value).norm(),
        replaced_row: row,
        x,
    })
}

fn check_bordered_dims(a: &ComplexMatrix, constraint_row: &[C64], rhs: &[C64]) -> Result<()> {
    if !a.is_square() || constraint_row.len() != a.cols() || rhs.len() != a.rows() {
        return Err(EngineError::Dimension(format!(
            "bordered solve with a {}x{} matrix, constraint of length {}, rhs of length {}",
            a.rows(),
            a.cols(),
            constraint_row.len(),
            rhs.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::testing::random_matrix;
    use super::super::c;
    use super::*;

    #[test]
    fn lu_solves_random_system() {
        let a = random_matrix(6, 3);
        let x: Vec<C64> = (0..6).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let b = a.matvec(&x);
        let got = solve(&a, &b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = random_matrix(5, 9);
        let inv = Lu::new(&a).unwrap().inverse();
        let prod = &a * &inv;
        assert!((&prod - &ComplexMatrix::identity(5)).max_abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_underdetermined() {
        let a = ComplexMatrix::zeros(2, 2);
        let one = c(1.0, 0.0);
        let res = solve_bordered(&a, &[one, one], one, &[c(0.0, 0.0); 2]);
        assert!(matches!(res, Err(EngineError::NonUniqueSolution(_))));
    }

    #[test]
    fn identity_with_sum_constraint_is_contradictory() {
        let a = ComplexMatrix::identity(2);
        let one = c(1.0, 0.0);
        let sol = solve_bordered(&a, &[one, one], one, &[c(0.0, 0.0); 2]).unwrap();
        assert!(sol.residual > 0.5);
        assert!(sol.constraint_residual < 1e-14);
        assert!(!sol.is_consistent(1e-10));
    }

    #[test]
    fn bordered_recovers_unique_kernel_vector() {
        // rank-1 deficient: kernel spanned by (1, 1, 1)
        let a = ComplexMatrix::from_real_rows(&[
            &[-1.0, 1.0, 0.0],
            &[0.0, -1.0, 1.0],
            &[1.0, 0.0, -1.0],
        ]);
        let one = c(1.0, 0.0);
        let sol = solve_bordered(&a, &[one; 3], one, &[c(0.0, 0.0); 3]).unwrap();
        for x in &sol.x {
            assert!((x - c(1.0 / 3.0, 0.0)).norm() < 1e-14);
        }
        assert!(sol.is_consistent(1e-14));
    }

    #[test]
    fn dimension_errors() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(Lu::new(&a), Err(EngineError::Dimension(_))));
        let sq = ComplexMatrix::identity(2);
        let one = c(1.0, 0.0);
        assert!(solve_bordered(&sq, &[one], one, &[one, one]).is_err());
    }
}
