//! Two-time correlation functions from the quantum regression theorem.
//!
//! For a stationary state `ρ` and generator `L`:
//!
//! * two-point: `⟨X(t)Y(t+τ)⟩ = Tr[Y·e^{Lτ}(ρX)]`
//! * sandwich: `⟨A(t)Y(t+τ)B(t)⟩ = Tr[Y·e^{Lτ}(BρA)]`
//!
//! The sandwich form with `B = J`, `A = J†` is the rate of `Y` at delay τ
//! after a jump `J`, e.g. the Glauber G² of the cold emitter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::liouville::{DensityMatrix, Liouvillian};
use crate::model::{EngineParams, OperatorSet, QuantumOperator};
use crate::numerics::C64;

/// Default number of delay samples.
pub const DEFAULT_TAU_POINTS: usize = 600;
/// Default delay span in units of `1/E_J'`.
pub const DEFAULT_TAU_SPAN: f64 = 30.0;

/// Strictly increasing delays in ns, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid(Vec<f64>);

impl TauGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.first() != Some(&0.0) {
            return Err(EngineError::invalid("tau_grid", "must start at 0"));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) || taus.iter().any(|t| !t.is_finite()) {
            return Err(EngineError::invalid("tau_grid", "must be finite and strictly increasing"));
        }
        Ok(TauGrid(taus))
    }

    /// `points` uniform samples on `[0, tau_max]`.
    pub fn uniform(tau_max: f64, points: usize) -> Result<Self> {
        if points < 2 || !(tau_max > 0.0) {
            return Err(EngineError::invalid(
                "tau_grid",
                format!("need at least 2 points and a positive span (got {points}, {tau_max})"),
            ));
        }
        let step = tau_max / (points - 1) as f64;
        TauGrid::new((0..points).map(|i| i as f64 * step).collect())
    }

    /// 600 points over `[0, 30/E_J']`.
    pub fn default_for(p: &EngineParams) -> Result<Self> {
        let ep = p.e_j_prime().abs();
        if ep == 0.0 {
            return Err(EngineError::invalid(
                "tau_grid",
                "default grid needs a nonzero exchange coupling",
            ));
        }
        TauGrid::uniform(DEFAULT_TAU_SPAN / ep, DEFAULT_TAU_POINTS)
    }

    pub fn taus(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    TwoPoint,
    Sandwich,
}

/// A correlator `⟨X(t)Y(t+τ)⟩` or `⟨A(t)Y(t+τ)B(t)⟩`.
#[derive(Debug, Clone, Copy)]
pub enum Correlator<'a> {
    TwoPoint {
        x: &'a QuantumOperator,
        y: &'a QuantumOperator,
    },
    Sandwich {
        a: &'a QuantumOperator,
        y: &'a QuantumOperator,
        b: &'a QuantumOperator,
    },
}

impl<'a> Correlator<'a> {
    pub fn kind(&self) -> CorrelationKind {
        match self {
            Correlator::TwoPoint { .. } => CorrelationKind::TwoPoint,
            Correlator::Sandwich { .. } => CorrelationKind::Sandwich,
        }
    }

    pub fn observable(&self) -> &'a QuantumOperator {
        match *self {
            Correlator::TwoPoint { y, .. } | Correlator::Sandwich { y, .. } => y,
        }
    }

    /// Operator propagated by the regression theorem: `ρX` or `BρA`.
    pub fn seed(&self, rho: &DensityMatrix) -> QuantumOperator {
        let r = rho.matrix();
        match *self {
            Correlator::TwoPoint { x, .. } => r * x,
            Correlator::Sandwich { a, b, .. } => &(b * r) * a,
        }
    }

    /// Long-delay limit `Tr(seed)·⟨Y⟩`, i.e. `⟨X⟩⟨Y⟩` or `⟨AB⟩⟨Y⟩`.
    pub fn factorized(&self, rho: &DensityMatrix) -> C64 {
        self.seed(rho).trace() * rho.expectation(self.observable())
    }
}

/// Sampled correlation function.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub kind: CorrelationKind,
    pub label: String,
    /// Delays in ns.
    pub tau: Vec<f64>,
    /// Unit in which delays are reported, in ns (here `1/E_J`).
    pub time_unit: f64,
    /// Raw correlation values, including any prefactor.
    pub values: Vec<C64>,
    /// Long-delay limit, including any prefactor.
    pub factorized: C64,
    /// Constant prefactor multiplying the bare correlator (κ² for G²).
    pub prefactor: f64,
    /// `Tr[BρA]`, the jump probability density, for sandwich correlators.
    pub jump_norm: Option<C64>,
}

impl CorrelationSeries {
    pub fn scaled_tau(&self) -> Vec<f64> {
        self.tau.iter().map(|t| t / self.time_unit).collect()
    }

    /// Values with the factorized long-delay limit subtracted.
    pub fn connected(&self) -> Vec<C64> {
        self.values.iter().map(|v| v - self.factorized).collect()
    }

    /// Bare correlator divided by the jump norm: the expectation of `Y` at
    /// delay τ conditioned on a jump at τ = 0.
    pub fn normalized(&self) -> Result<Vec<C64>> {
        let norm = self
            .jump_norm
            .ok_or_else(|| EngineError::invalid("normalized", "only defined for sandwich correlators"))?;
        if norm.norm() <= 1e-14 {
            return Err(EngineError::NullEvent(norm.norm()));
        }
        let d = norm * self.prefactor;
        Ok(self.values.iter().map(|v| v / d).collect())
    }
}

fn evaluate(
    l: &Liouvillian,
    rho: &DensityMatrix,
    corr: Correlator<'_>,
    grid: &TauGrid,
    prefactor: f64,
    label: &str,
    time_unit: f64,
) -> Result<CorrelationSeries> {
    let seed = corr.seed(rho).vectorize();
    let y = corr.observable();
    let dim = l.dim();
    // warm the cached propagator plan before fanning out
    l.plan()?;
    let values = grid
        .taus()
        .par_iter()
        .map(|&tau| {
            let v = l.propagate_vec(&seed, tau)?;
            Ok(trace_product(y, &v, dim) * prefactor)
        })
        .collect::<Result<Vec<C64>>>()?;
    let jump_norm = match corr {
        Correlator::Sandwich { .. } => Some(corr.seed(rho).trace()),
        Correlator::TwoPoint { .. } => None,
    };
    Ok(CorrelationSeries {
        kind: corr.kind(),
        label: label.to_string(),
        tau: grid.taus().to_vec(),
        time_unit,
        values,
        factorized: corr.factorized(rho) * prefactor,
        prefactor,
        jump_norm,
    })
}

/// `Tr[Y·unvec(v)]`.
fn trace_product(y: &QuantumOperator, v: &[C64], dim: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..dim {
        for k in 0..dim {
            acc += y[(i, k)] * v[i * dim + k];
        }
    }
    acc
}

/// `⟨X(t)Y(t+τ)⟩_ss` on `grid`, delays reported in units of `time_unit` ns.
pub fn two_point(
    l: &Liouvillian,
    rho: &DensityMatrix,
    x: &QuantumOperator,
    y: &QuantumOperator,
    grid: &TauGrid,
    time_unit: f64,
) -> Result<CorrelationSeries> {
    evaluate(l, rho, Correlator::TwoPoint { x, y }, grid, 1.0, "two_point", time_unit)
}

/// `⟨A(t)Y(t+τ)B(t)⟩_ss` on `grid`.
pub fn sandwich(
    l: &Liouvillian,
    rho: &DensityMatrix,
    a: &QuantumOperator,
    y: &QuantumOperator,
    b: &QuantumOperator,
    grid: &TauGrid,
    time_unit: f64,
) -> Result<CorrelationSeries> {
    evaluate(l, rho, Correlator::Sandwich { a, y, b }, grid, 1.0, "sandwich", time_unit)
}

/// Glauber `G²(τ) = κ_c²⟨σ⁺_c(t)σ⁺_c(t+τ)σ⁻_c(t+τ)σ⁻_c(t)⟩_ss` in 1/ns².
pub fn g2_cold(
    l: &Liouvillian,
    rho: &DensityMatrix,
    p: &EngineParams,
    ops: &OperatorSet,
    grid: &TauGrid,
) -> Result<CorrelationSeries> {
    let corr = Correlator::Sandwich {
        a: &ops.sigma_plus_c,
        y: &ops.n_c_op,
        b: &ops.sigma_minus_c,
    };
    evaluate(l, rho, corr, grid, p.kappa_c * p.kappa_c, "g2", 1.0 / p.e_j)
}

/// `∫₀^∞ [C(τ) − C(∞)] dτ` from the restricted resolvent.
///
/// With `connected == false` the bare integral is returned, which only
/// exists when the factorized limit vanishes.
pub fn integrate_correlation(
    l: &Liouvillian,
    rho: &DensityMatrix,
    corr: Correlator<'_>,
    connected: bool,
) -> Result<C64> {
    check_integrable(rho, corr, connected)?;
    let x = l.resolvent_integral(&corr.seed(rho).vectorize())?;
    Ok(trace_product(corr.observable(), &x, l.dim()))
}

/// Quadrature counterpart of [`integrate_correlation`], truncated at
/// `50/gap`.
pub fn integrate_correlation_quadrature(
    l: &Liouvillian,
    rho: &DensityMatrix,
    corr: Correlator<'_>,
    connected: bool,
) -> Result<C64> {
    check_integrable(rho, corr, connected)?;
    let tau_max = 50.0 / l.spectral_gap()?;
    let x = l.quadrature_integral(&corr.seed(rho).vectorize(), tau_max)?;
    Ok(trace_product(corr.observable(), &x, l.dim()))
}

fn check_integrable(rho: &DensityMatrix, corr: Correlator<'_>, connected: bool) -> Result<()> {
    if !connected {
        let f = corr.factorized(rho);
        if f.norm() > 1e-14 {
            return Err(EngineError::invalid(
                "connected",
                format!("bare integral diverges (long-delay limit {f})"),
            ));
        }
    }
    Ok(())
}

/// The four stroke correlators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrokePanel {
    /// Cold-emission G².
    G2,
    /// `⟨σ⁻_h(t) Î(t+τ) σ⁺_h(t)⟩`: current after a hot absorption.
    HotjumpCurrent,
    /// `⟨Î(t) n̂_c(t+τ)⟩`.
    CurrentColdpop,
    /// `⟨σ⁻_h(t) n̂_c(t+τ) σ⁺_h(t)⟩`: cold population after a hot absorption.
    HotjumpColdpop,
}

impl StrokePanel {
    pub const ALL: [StrokePanel; 4] = [
        StrokePanel::G2,
        StrokePanel::HotjumpCurrent,
        StrokePanel::CurrentColdpop,
        StrokePanel::HotjumpColdpop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrokePanel::G2 => "g2",
            StrokePanel::HotjumpCurrent => "hotjump_current",
            StrokePanel::CurrentColdpop => "current_coldpop",
            StrokePanel::HotjumpColdpop => "hotjump_coldpop",
        }
    }

    pub fn correlator(self, ops: &OperatorSet) -> Correlator<'_> {
        match self {
            StrokePanel::G2 => Correlator::Sandwich {
                a: &ops.sigma_plus_c,
                y: &ops.n_c_op,
                b: &ops.sigma_minus_c,
            },
            StrokePanel::HotjumpCurrent => Correlator::Sandwich {
                a: &ops.sigma_minus_h,
                y: &ops.current_op,
                b: &ops.sigma_plus_h,
            },
            StrokePanel::CurrentColdpop => Correlator::TwoPoint {
                x: &ops.current_op,
                y: &ops.n_c_op,
            },
            StrokePanel::HotjumpColdpop => Correlator::Sandwich {
                a: &ops.sigma_minus_h,
                y: &ops.n_c_op,
                b: &ops.sigma_plus_h,
            },
        }
    }
}

impl std::str::FromStr for StrokePanel {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        StrokePanel::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| EngineError::invalid("which", format!("unknown correlator `{s}`")))
    }
}

/// Evaluates one stroke panel; delays reported in units of `1/E_J`.
pub fn stroke_series(
    l: &Liouvillian,
    rho: &DensityMatrix,
    p: &EngineParams,
    ops: &OperatorSet,
    panel: StrokePanel,
    grid: &TauGrid,
) -> Result<CorrelationSeries> {
    if panel == StrokePanel::G2 {
        return g2_cold(l, rho, p, ops, grid);
    }
    evaluate(l, rho, panel.correlator(ops), grid, 1.0, panel.name(), 1.0 / p.e_j)
}

/// Index of the first interior local maximum of `values`.
pub fn first_local_max(values: &[f64]) -> Option<usize> {
    (1..values.len().saturating_sub(1)).find(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
}

/// Index of the first interior local minimum at or after `start`.
pub fn next_local_min(values: &[f64], start: usize) -> Option<usize> {
    (start.max(1)..values.len().saturating_sub(1))
        .find(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
}

/// Swings smaller than this fraction of the peak count as rounding noise.
const CONTRAST_FLOOR: f64 = 1e-9;

/// Visibility `(max − min)/(max + min)` of the first oscillation, zero if
/// the series is overdamped.
pub fn oscillation_contrast(values: &[f64]) -> f64 {
    let Some(peak) = first_local_max(values) else {
        return 0.0;
    };
    let Some(trough) = next_local_min(values, peak + 1) else {
        return 0.0;
    };
    let (hi, lo) = (values[peak], values[trough]);
    if hi + lo == 0.0 || hi - lo <= CONTRAST_FLOOR * hi.abs() {
        0.0
    } else {
        (hi - lo) / (hi + lo)
    }
}
