//! General complex eigendecomposition via Hessenberg reduction and the
//! single-shift QR iteration to a complex Schur form `A = Q·T·Qᴴ`.
//! Eigenvectors come from back substitution on `T`.

use super::{ComplexMatrix, C64};
use crate::error::{EngineError, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Eigenvalues with matching right eigenvectors (columns of `vectors`,
/// unit 2-norm), sorted by real part descending, ties by imaginary part
/// ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: ComplexMatrix,
}

pub fn eig(a: &ComplexMatrix) -> Result<Eigen> {
    if !a.is_square() {
        return Err(EngineError::Dimension(format!(
            "eig of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    if a.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(EngineError::breakdown("eig", "non-finite matrix entry"));
    }
    let (mut t, mut q) = hessenberg(a);
    schur_qr(&mut t, &mut q)?;
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let vectors_t = triangular_eigenvectors(&t);
    let vectors = q.matmul(&vectors_t);

    let order = eigen_order(&values);
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let mut sorted_vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (i, z) in col.into_iter().enumerate() {
            sorted_vectors[(i, dst)] = z / norm;
        }
    }
    Ok(Eigen {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// Deterministic ordering. Real parts within a relative 1e-10 band are
/// treated as tied so conjugate pairs order by imaginary part rather than
/// by rounding noise.
fn eigen_order(values: &[C64]) -> Vec<usize> {
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tie = 1e-10 * scale;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].re.total_cmp(&values[i].re));
    let mut start = 0;
    while start < order.len() {
        let lead = values[order[start]].re;
        let mut end = start + 1;
        while end < order.len() && (lead - values[order[end]].re) <= tie {
            end += 1;
        }
        order[start..end].sort_by(|&i, &j| values[i].im.total_cmp(&values[j].im));
        start = end;
    }
    order
}

/// Householder reduction to upper Hessenberg form. Returns `(H, Q)` with
/// `A = Q·H·Qᴴ`.
fn hessenberg(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 {
            x[0] / x[0].norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let mut v = x;
        v[0] += phase * xnorm;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= vnorm);

        // H ← (I − 2vvᴴ) H on rows k+1..n
        for j in 0..n {
            let s: C64 = (k + 1..n).map(|i| v[i - k - 1].conj() * h[(i, j)]).sum();
            for i in k + 1..n {
                h[(i, j)] -= 2.0 * v[i - k - 1] * s;
            }
        }
        // H ← H (I − 2vvᴴ) and Q ← Q (I − 2vvᴴ) on columns k+1..n
        for m in [&mut h, &mut q] {
            for i in 0..n {
                let s: C64 = (k + 1..n).map(|j| m[(i, j)] * v[j - k - 1]).sum();
                for j in k + 1..n {
                    m[(i, j)] -= 2.0 * s * v[j - k - 1].conj();
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
    }
    (h, q)
}

/// Rotation `G = [[c, s], [−s̄, c]]` with `G·[x; y] = [r; 0]`.
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

fn schur_qr(h: &mut ComplexMatrix, q: &mut ComplexMatrix) -> Result<()> {
    let n = h.rows();
    let eps = f64::EPSILON;
    let norm = h.max_abs().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // locate the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let off = h[(lo, lo - 1)].norm();
            let diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let floor = if diag == 0.0 { norm } else { diag };
            if off <= eps * floor {
                h[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > MAX_SWEEPS_PER_EIGENVALUE || total > MAX_SWEEPS_PER_EIGENVALUE * n {
            return Err(EngineError::breakdown(
                "eig",
                format!(
                    "QR iteration did not converge (block {lo}..={hi}, subdiagonal {:.3e})",
                    h[(hi, hi - 1)].norm()
                ),
            ));
        }

        let shift = if iter.is_multiple_of(11) {
            // exceptional shift to break cycles
            h[(hi, hi)] + C64::new(h[(hi, hi - 1)].norm(), 0.0) * 0.75
        } else {
            wilkinson_shift(h, hi)
        };

        let mut x = h[(lo, lo)] - shift;
        let mut y = h[(lo + 1, lo)];
        for k in lo..hi {
            let (cs, sn) = givens(x, y);
            // rows k, k+1 (left multiply by G)
            let col_start = if k > lo { k - 1 } else { lo };
            for j in col_start..n {
                let a = h[(k, j)];
                let b = h[(k + 1, j)];
                h[(k, j)] = cs * a + sn * b;
                h[(k + 1, j)] = -sn.conj() * a + cs * b;
            }
            // columns k, k+1 (right multiply by Gᴴ)
            let row_end = (k + 2).min(hi);
            for i in 0..=row_end {
                let a = h[(i, k)];
                let b = h[(i, k + 1)];
                h[(i, k)] = a * cs + b * sn.conj();
                h[(i, k + 1)] = -a * sn + b * cs;
            }
            for i in 0..n {
                let a = q[(i, k)];
                let b = q[(i, k + 1)];
                q[(i, k)] = a * cs + b * sn.conj();
                q[(i, k + 1)] = -a * sn + b * cs;
            }
            if k + 1 < hi {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
            }
        }
    }
    // clean strictly-lower part
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok(())
}

fn wilkinson_shift(h: &ComplexMatrix, hi: usize) -> C64 {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let cc = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let half = (a - d) * 0.5;
    let disc = (half * half + b * cc).sqrt();
    let mu1 = (a + d) * 0.5 + disc;
    let mu2 = (a + d) * 0.5 - disc;
    if (mu1 - d).norm() < (mu2 - d).norm() {
        mu1
    } else {
        mu2
    }
}

/// Right eigenvectors of an upper-triangular matrix, one per column.
fn triangular_eigenvectors(t: &ComplexMatrix) -> ComplexMatrix {
    let n = t.rows();
    let small = f64::EPSILON * t.max_abs().max(f64::MIN_POSITIVE);
    let mut v = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        v[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let s: C64 = (j + 1..=k).map(|m| t[(j, m)] * v[(m, k)]).sum();
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            v[(j, k)] = -s / denom;
        }
    }
    v
}
