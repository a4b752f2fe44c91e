//! Vectorized GKLS generator, steady state, propagation and the restricted
//! resolvent used for `∫₀^∞` correlation integrals.
//!
//! Vectorization is column stacking throughout: `vec(A·X·B) = (Bᵀ⊗A)·vec(X)`,
//! so the generator reads
//!
//! ```text
//! L = −i(I⊗H − Hᵀ⊗I) + Σ_k γ_k (J̄_k⊗J_k − ½ I⊗J_k†J_k − ½ (J_k†J_k)ᵀ⊗I)
//! ```

use std::sync::OnceLock;

use crate::error::{EngineError, Result};
use crate::model::{OperatorSet, QuantumOperator};
use crate::numerics::{
    eig, expm_pade, kron, solve_bordered_replacing, vec_norm, ComplexMatrix, Eigen, ExpmPlan, C64,
};

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(QuantumOperator);

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

impl DensityMatrix {
    /// Validates the state invariants at the default tolerances.
    pub fn new(m: QuantumOperator) -> Result<Self> {
        let rho = DensityMatrix(m);
        rho.check(HERMITIAN_TOL, TRACE_TOL, POSITIVITY_TOL)?;
        Ok(rho)
    }

    /// Wraps without validation, for states produced by exact maps.
    pub fn new_unchecked(m: QuantumOperator) -> Self {
        DensityMatrix(m)
    }

    pub fn pure(psi: &[C64]) -> Self {
        let n = psi.len();
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        DensityMatrix(QuantumOperator::from_fn(n, n, |i, j| {
            psi[i] * psi[j].conj() / norm2
        }))
    }

    pub fn from_vectorized(v: &[C64], dim: usize) -> Self {
        DensityMatrix(QuantumOperator::unvectorize(v, dim))
    }

    pub fn check(&self, herm_tol: f64, trace_tol: f64, pos_tol: f64) -> Result<()> {
        let m = &self.0;
        if !m.is_hermitian(herm_tol) {
            return Err(EngineError::InvalidState(format!(
                "not Hermitian (deviation {:.3e})",
                (m - &m.adjoint()).max_abs()
            )));
        }
        let tr = m.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > trace_tol {
            return Err(EngineError::InvalidState(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue()?;
        if min < -pos_tol {
            return Err(EngineError::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &QuantumOperator {
        &self.0
    }

    pub fn into_matrix(self) -> QuantumOperator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn vectorize(&self) -> Vec<C64> {
        self.0.vectorize()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = (&self.0 + &self.0.adjoint()).scale_real(0.5);
        Ok(eig(&h)?.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        let d = &self.0 - &other.0;
        let h = (&d + &d.adjoint()).scale_real(0.5);
        Ok(0.5 * eig(&h)?.values.iter().map(|z| z.re.abs()).sum::<f64>())
    }

    pub fn expectation(&self, op: &QuantumOperator) -> C64 {
        crate::model::expectation(op, &self.0)
    }
}

/// Dense Liouvillian on column-stacked density matrices.
#[derive(Debug)]
pub struct Liouvillian {
    matrix: ComplexMatrix,
    dim: usize,
    plan: OnceLock<Result<ExpmPlan>>,
    spectrum: OnceLock<Result<Eigen>>,
    steady: OnceLock<Result<DensityMatrix>>,
}

impl Clone for Liouvillian {
    fn clone(&self) -> Self {
        Liouvillian::from_matrix(self.matrix.clone(), self.dim)
    }
}

/// Builds the generator of the local master equation for `ops`.
pub fn build_liouvillian(ops: &OperatorSet) -> Liouvillian {
    let channels: Vec<(&QuantumOperator, f64)> =
        ops.jump_ops.iter().map(|j| (&j.operator, j.rate)).collect();
    Liouvillian::from_parts(&ops.hamiltonian, &channels)
}

impl Liouvillian {
    pub fn from_parts(hamiltonian: &QuantumOperator, channels: &[(&QuantumOperator, f64)]) -> Self {
        let n = hamiltonian.rows();
        let id = ComplexMatrix::identity(n);
        let minus_i = C64::new(0.0, -1.0);
        let mut l = (&kron(&id, hamiltonian) - &kron(&hamiltonian.transpose(), &id)).scale(minus_i);
        for &(j, rate) in channels {
            if rate == 0.0 {
                continue;
            }
            let jj = &j.adjoint() * j;
            let term = &(&kron(&j.conj(), j) - &kron(&id, &jj).scale_real(0.5))
                - &kron(&jj.transpose(), &id).scale_real(0.5);
            l = &l + &term.scale_real(rate);
        }
        Liouvillian::from_matrix(l, n)
    }

    pub fn from_matrix(matrix: ComplexMatrix, dim: usize) -> Self {
        assert_eq!(matrix.rows(), dim * dim);
        Liouvillian {
            matrix,
            dim,
            plan: OnceLock::new(),
            spectrum: OnceLock::new(),
            steady: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// Hilbert-space dimension (the superoperator is `dim² × dim²`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `vec(I)`, whose conjugate transpose is the trace functional.
    pub fn trace_functional(&self) -> Vec<C64> {
        ComplexMatrix::identity(self.dim).vectorize()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.matvec(v)
    }

    pub fn plan(&self) -> Result<&ExpmPlan> {
        self.plan
            .get_or_init(|| ExpmPlan::new(&self.matrix))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn spectrum(&self) -> Result<&Eigen> {
        self.spectrum
            .get_or_init(|| eig(&self.matrix))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Slowest nonzero relaxation rate, `min_{k≥1} |Re λ_k|`.
    pub fn spectral_gap(&self) -> Result<f64> {
        let values = &self.spectrum()?.values;
        let gap = values[1..].iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
        if gap <= 0.0 {
            return Err(EngineError::NonUniqueSolution(format!(
                "second eigenvalue {} has non-negative real part",
                values[1]
            )));
        }
        Ok(gap)
    }

    /// Unique trace-one stationary state.
    pub fn steady_state(&self) -> Result<&DensityMatrix> {
        self.steady
            .get_or_init(|| self.solve_steady_state())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn solve_steady_state(&self) -> Result<DensityMatrix> {
        let rho = self.steady_state_replacing(0)?;
        self.cross_check_null_vector(&rho)?;
        rho.check(HERMITIAN_TOL, TRACE_TOL, POSITIVITY_TOL).map_err(|e| {
            EngineError::breakdown("steady_state", format!("solution violates state invariants: {e}"))
        })?;
        Ok(rho)
    }

    /// Steady state from the bordered system with the trace constraint in
    /// place of `row`. Only rows indexing diagonal entries are redundant.
    pub fn steady_state_replacing(&self, row: usize) -> Result<DensityMatrix> {
        let d2 = self.dim * self.dim;
        let zero = vec![C64::new(0.0, 0.0); d2];
        let sol = solve_bordered_replacing(
            &self.matrix,
            row,
            &self.trace_functional(),
            C64::new(1.0, 0.0),
            &zero,
        )?;
        let tol = 1e-10 * self.matrix.norm_fro().max(1.0);
        if !sol.is_consistent(tol) {
            return Err(EngineError::NonUniqueSolution(format!(
                "no consistent stationary solution (residual {:.3e})",
                sol.residual
            )));
        }
        Ok(DensityMatrix::from_vectorized(&sol.x, self.dim))
    }

    fn cross_check_null_vector(&self, rho: &DensityMatrix) -> Result<()> {
        let eigen = self.spectrum()?;
        let norm = self.matrix.norm_fro();
        let null = eigen.values[0];
        if null.norm() > 1e-9 * norm {
            return Err(EngineError::breakdown(
                "steady_state",
                format!("no eigenvalue at zero (closest {null})"),
            ));
        }
        if eigen.values.len() > 1 && eigen.values[1].norm() <= 1e-9 * norm {
            return Err(EngineError::NonUniqueSolution(format!(
                "degenerate null space: second eigenvalue {}",
                eigen.values[1]
            )));
        }
        let v = eigen.vectors.column(0);
        let tr: C64 = v.iter().zip(self.trace_functional()).map(|(a, b)| a * b).sum();
        if tr.norm() < 1e-12 {
            return Err(EngineError::breakdown("steady_state", "null eigenvector is traceless"));
        }
        let diff: Vec<C64> = v.iter().zip(rho.vectorize()).map(|(a, b)| a / tr - b).collect();
        let dev = vec_norm(&diff);
        if dev > 1e-8 {
            return Err(EngineError::breakdown(
                "steady_state",
                format!("bordered solve and null eigenvector disagree by {dev:.3e}"),
            ));
        }
        Ok(())
    }

    /// `vec(ρ(t)) = e^{L t}·vec(ρ(0))`.
    pub fn propagate(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        if t < 0.0 {
            return Err(EngineError::invalid("t", "propagation time must be non-negative"));
        }
        let v = self.propagate_vec(&rho.vectorize(), t)?;
        Ok(DensityMatrix::from_vectorized(&v, self.dim))
    }

    /// `e^{L t}·v` for any vectorized operator.
    pub fn propagate_vec(&self, v: &[C64], t: f64) -> Result<Vec<C64>> {
        self.plan()?.apply(t, v)
    }

    /// Fixed-step classical RK4 integration of `dρ/dt = Lρ`, independent of
    /// the exponential.
    pub fn propagate_rk4(&self, rho: &DensityMatrix, t: f64, steps: usize) -> DensityMatrix {
        let h = t / steps.max(1) as f64;
        let mut y = rho.vectorize();
        for _ in 0..steps.max(1) {
            let k1 = self.apply(&y);
            let k2 = self.apply(&axpy(&y, &k1, 0.5 * h));
            let k3 = self.apply(&axpy(&y, &k2, 0.5 * h));
            let k4 = self.apply(&axpy(&y, &k3, h));
            for i in 0..y.len() {
                y[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
        }
        DensityMatrix::from_vectorized(&y, self.dim)
    }

    /// Stationary projection `Π·v = vec(ρ_ss)·Tr(v)`.
    pub fn stationary_projection(&self, v: &[C64]) -> Result<Vec<C64>> {
        let rho = self.steady_state()?.vectorize();
        let tr = self.trace_of(v);
        Ok(rho.iter().map(|r| r * tr).collect())
    }

    pub fn trace_of(&self, v: &[C64]) -> C64 {
        (0..self.dim).map(|i| v[i * self.dim + i]).sum()
    }

    /// Solves `L·x = w` with `Tr x = 0` for traceless `w`.
    pub fn restricted_solve(&self, w: &[C64]) -> Result<Vec<C64>> {
        let scale = vec_norm(w).max(f64::MIN_POSITIVE);
        if self.trace_of(w).norm() > 1e-12 * scale {
            return Err(EngineError::breakdown(
                "restricted_solve",
                "right-hand side has a stationary component",
            ));
        }
        let sol = solve_bordered_replacing(
            &self.matrix,
            0,
            &self.trace_functional(),
            C64::new(0.0, 0.0),
            w,
        )
        .map_err(|e| EngineError::breakdown("restricted_solve", e.to_string()))?;
        let tol = 1e-9 * (self.matrix.norm_fro() * vec_norm(&sol.x) + scale);
        if sol.residual > tol {
            return Err(EngineError::breakdown(
                "restricted_solve",
                format!("residual {:.3e} exceeds {:.3e}", sol.residual, tol),
            ));
        }
        Ok(sol.x)
    }

    /// `∫₀^∞ (e^{Lτ} − Π_ss)·v dτ`, exactly, via the restricted inverse.
    pub fn resolvent_integral(&self, v: &[C64]) -> Result<Vec<C64>> {
        let pv = self.stationary_projection(v)?;
        let rhs: Vec<C64> = v.iter().zip(&pv).map(|(a, b)| -(a - b)).collect();
        self.restricted_solve(&rhs)
    }

    /// Gauss–Legendre quadrature of `∫₀^{τ_max} (e^{Lτ} − Π_ss)·v dτ` using
    /// Padé propagators. Serves as an independent check of
    /// [`Liouvillian::resolvent_integral`].
    pub fn quadrature_integral(&self, v: &[C64], tau_max: f64) -> Result<Vec<C64>> {
        let pv = self.stationary_projection(v)?;
        let q: Vec<C64> = v.iter().zip(&pv).map(|(a, b)| a - b).collect();
        let width = (0.5 / self.matrix.norm_1()).min(tau_max);
        let panels = (tau_max / width).ceil() as usize;
        let width = tau_max / panels as f64;
        let node_props: Vec<ComplexMatrix> = GL8_NODES
            .iter()
            .map(|&x| expm_pade(&self.matrix.scale_real(0.5 * width * (1.0 + x))))
            .collect::<Result<_>>()?;
        let step = expm_pade(&self.matrix.scale_real(width))?;
        let mut acc = vec![C64::new(0.0, 0.0); q.len()];
        let mut start = q;
        for _ in 0..panels {
            for (prop, w) in node_props.iter().zip(GL8_WEIGHTS) {
                let val = prop.matvec(&start);
                for (a, b) in acc.iter_mut().zip(val) {
                    *a += b * (0.5 * width * w);
                }
            }
            start = step.matvec(&start);
        }
        Ok(acc)
    }
}

fn axpy(y: &[C64], k: &[C64], h: f64) -> Vec<C64> {
    y.iter().zip(k).map(|(a, b)| a + b * h).collect()
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EngineParams, OperatorSet};
    use crate::numerics::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = ComplexMatrix::from_fn(4, 4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = &a * &a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m.scale(c(1.0, 0.0) / tr)).unwrap()
    }

    /// Directly assembled right-hand side of the master equation.
    fn rhs_direct(ops: &OperatorSet, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ops.hamiltonian.commutator(rho).scale(c(0.0, -1.0));
        for j in &ops.jump_ops {
            let jd = j.operator.adjoint();
            let jj = &jd * &j.operator;
            let d = &(&(&j.operator * rho) * &jd) - &jj.anticommutator(rho).scale_real(0.5);
            out = &out + &d.scale_real(j.rate);
        }
        out
    }

    #[test]
    fn superoperator_matches_direct_rhs() {
        let p = EngineParams { n_c: 0.3, ..EngineParams::baseline() };
        let ops = OperatorSet::new(&p);
        let l = build_liouvillian(&ops);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let rho = ComplexMatrix::from_fn(4, 4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let got = ComplexMatrix::unvectorize(&l.apply(&rho.vectorize()), 4);
            let want = rhs_direct(&ops, &rho);
            assert!((&got - &want).max_abs() < 1e-13);
        }
    }

    #[test]
    fn trace_preservation() {
        let l = build_liouvillian(&OperatorSet::new(&EngineParams::baseline()));
        let tf = l.trace_functional();
        let m = l.matrix();
        let row: Vec<C64> = (0..16).map(|j| (0..16).map(|i| tf[i].conj() * m[(i, j)]).sum()).collect();
        assert!(vec_norm(&row) <= 1e-12 * m.norm_fro());
    }

    #[test]
    fn single_channel_decay() {
        let ops = OperatorSet::new(&EngineParams::baseline());
        let kappa = 0.7;
        let l = Liouvillian::from_parts(&ComplexMatrix::zeros(4, 4), &[(&ops.sigma_minus_c, kappa)]);
        // start in |g_h e_c⟩
        let rho0 = DensityMatrix::pure(&[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        for t in [0.1, 1.0, 3.0] {
            let n = l.propagate(&rho0, t).unwrap().expectation(&ops.n_c_op).re;
            assert!((n - (-kappa * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_qubits_thermalize() {
        let p = EngineParams { lambda_h: 0.0, n_c: 0.4, ..EngineParams::baseline() };
        let ops = OperatorSet::new(&p);
        let rho = build_liouvillian(&ops).steady_state().unwrap().clone();
        let nh = rho.expectation(&ops.n_h_op).re;
        let nc = rho.expectation(&ops.n_c_op).re;
        assert!((nh - 1.5 / 4.0).abs() < 1e-12);
        assert!((nc - 0.4 / 1.8).abs() < 1e-12);
    }

    #[test]
    fn equal_baths_carry_no_current() {
        let p = EngineParams { n_c: 1.5, ..EngineParams::baseline() };
        let ops = OperatorSet::new(&p);
        let rho = build_liouvillian(&ops).steady_state().unwrap().clone();
        assert!(rho.expectation(&ops.current_op).norm() < 1e-13);
    }

    #[test]
    fn steady_state_row_choice_invariant() {
        let p = EngineParams { n_c: 0.2, kappa_c: 0.4, ..EngineParams::baseline() };
        let l = build_liouvillian(&OperatorSet::new(&p));
        let reference = l.steady_state_replacing(0).unwrap();
        for row in [5, 10, 15] {
            let other = l.steady_state_replacing(row).unwrap();
            assert!((reference.matrix() - other.matrix()).max_abs() < 1e-10);
        }
        // off-diagonal rows are not redundant: replacing one leaves a singular system
        assert!(l.steady_state_replacing(1).is_err());
    }

    #[test]
    fn no_dissipation_is_not_unique() {
        let ops = OperatorSet::new(&EngineParams::baseline());
        let l = Liouvillian::from_parts(&ops.hamiltonian, &[]);
        assert!(matches!(l.steady_state(), Err(EngineError::NonUniqueSolution(_))));
    }

    #[test]
    fn spectrum_has_single_zero() {
        let l = build_liouvillian(&OperatorSet::new(&EngineParams::baseline()));
        let eigen = l.spectrum().unwrap();
        let norm = l.matrix().norm_fro();
        assert!(eigen.values[0].norm() <= 1e-9 * norm);
        assert!(eigen.values[1..].iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn propagation_basics() {
        let l = build_liouvillian(&OperatorSet::new(&EngineParams::baseline()));
        let rho = random_state(3);
        assert!((l.propagate(&rho, 0.0).unwrap().matrix() - rho.matrix()).max_abs() < 1e-13);
        let (t1, t2) = (0.8, 2.3);
        let a = l.propagate(&rho, t1 + t2).unwrap();
        let b = l.propagate(&l.propagate(&rho, t1).unwrap(), t2).unwrap();
        assert!((a.matrix() - b.matrix()).max_abs() < 1e-10);
        assert!(a.check(1e-10, 1e-10, 1e-10).is_ok());
        let rk = l.propagate_rk4(&rho, t1 + t2, 4000);
        assert!((a.matrix() - rk.matrix()).max_abs() < 1e-7);
        assert!(l.propagate(&rho, -1.0).is_err());
    }

    #[test]
    fn relaxation_to_steady_state() {
        let l = build_liouvillian(&OperatorSet::new(&EngineParams::baseline()));
        let gap = l.spectral_gap().unwrap();
        let ss = l.steady_state().unwrap();
        for seed in 0..5 {
            let rho = l.propagate(&random_state(seed), 1e3 / gap).unwrap();
            assert!(rho.trace_distance(ss).unwrap() < 1e-8);
        }
    }

    #[test]
    fn resolvent_of_stationary_direction_vanishes() {
        let l = build_liouvillian(&OperatorSet::new(&EngineParams::baseline()));
        let v = l.steady_state().unwrap().vectorize();
        let x = l.resolvent_integral(&v).unwrap();
        assert!(vec_norm(&x) < 1e-12);
    }

    #[test]
    fn resolvent_recovers_preimage() {
        let l = build_liouvillian(&OperatorSet::new(&EngineParams::baseline()));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut y: Vec<C64> = (0..16).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let tr = l.trace_of(&y);
            for i in 0..4 {
                y[i * 4 + i] -= tr / 4.0;
            }
            // ∫(e^{Lτ}−Π)·L·y dτ = −y for traceless y
            let v = l.apply(&y);
            let x = l.resolvent_integral(&v).unwrap();
            let err: Vec<C64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            assert!(vec_norm(&err) < 1e-10 * vec_norm(&y));
        }
    }

    #[test]
    fn resolvent_matches_quadrature() {
        let p = EngineParams { kappa_h: 0.3, kappa_c: 0.3, ..EngineParams::baseline() };
        let ops = OperatorSet::new(&p);
        let l = build_liouvillian(&ops);
        let gap = l.spectral_gap().unwrap();
        let rho = l.steady_state().unwrap().matrix().clone();
        let v = (&rho * &ops.current_op).vectorize();
        let exact = l.resolvent_integral(&v).unwrap();
        let quad = l.quadrature_integral(&v, 50.0 / gap).unwrap();
        let diff: Vec<C64> = exact.iter().zip(&quad).map(|(a, b)| a - b).collect();
        assert!(vec_norm(&diff) <= 1e-6 * vec_norm(&exact));
    }
}
