//! Mean currents, long-time work and heat variances, and parameter sweeps.
//!
//! All quantities are in internal units (ħ = e = 1, rad/ns). The pair
//! energy `2eV` equals `ω_h − ω_c`, so power is `⟨Î⟩/2 · (ω_h − ω_c)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlators::{integrate_correlation, Correlator, StrokePanel};
use crate::error::{EngineError, Result};
use crate::liouville::{build_liouvillian, DensityMatrix, Liouvillian};
use crate::model::{EngineParams, OperatorSet};
use crate::numerics::C64;

/// Parameters with their operators, generator and steady state.
#[derive(Debug, Clone)]
pub struct EngineModel {
    pub params: EngineParams,
    pub ops: OperatorSet,
    pub liouvillian: Liouvillian,
}

impl EngineModel {
    pub fn new(params: EngineParams) -> Result<Self> {
        params.validate()?;
        let ops = OperatorSet::new(&params);
        let liouvillian = build_liouvillian(&ops);
        Ok(Self {
            params,
            ops,
            liouvillian,
        })
    }

    pub fn steady_state(&self) -> Result<&DensityMatrix> {
        self.liouvillian.steady_state()
    }
}

/// Steady-state current from the closed-form solution for `κ_h = κ_c = κ`,
/// in units of e/ns:
///
/// `(n_h − n_c) / [(n_h + n_c + 1)(1/κ + κ(2n_c+1)(2n_h+1)/E_J'²)]`.
pub fn analytic_current(p: &EngineParams) -> Result<f64> {
    let kappa = p.equal_kappa().ok_or_else(|| {
        EngineError::UnsupportedRestriction(format!(
            "closed form needs kappa_h == kappa_c (got {} and {})",
            p.kappa_h, p.kappa_c
        ))
    })?;
    let ep = p.e_j_prime();
    if ep == 0.0 {
        return Ok(0.0);
    }
    let bracket = 1.0 / kappa + kappa * (2.0 * p.n_c + 1.0) * (2.0 * p.n_h + 1.0) / (ep * ep);
    Ok((p.n_h - p.n_c) / ((p.n_h + p.n_c + 1.0) * bracket))
}

/// Bath coupling maximizing [`analytic_current`]: `E_J'/√((2n_h+1)(2n_c+1))`.
pub fn optimal_kappa(p: &EngineParams) -> f64 {
    p.e_j_prime().abs() / ((2.0 * p.n_h + 1.0) * (2.0 * p.n_c + 1.0)).sqrt()
}

/// Steady-state transport summary in internal units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineReport {
    pub params: EngineParams,
    /// `⟨Î⟩` in e/ns.
    pub mean_current: f64,
    /// Closed-form current when `κ_h = κ_c`.
    pub analytic_current: Option<f64>,
    pub pop_hot: f64,
    pub pop_cold: f64,
    /// Cooper pairs per ns, `⟨Î⟩/2e`.
    pub pair_rate: f64,
    /// Net quanta per ns emitted into the cold bath.
    pub cold_emission_rate: f64,
    /// Net quanta per ns absorbed from the hot bath.
    pub hot_absorption_rate: f64,
    /// `⟨Î⟩·V`, in ħ·rad/ns².
    pub power: f64,
    /// Heat current into the cold bath.
    pub heat_rate_cold: f64,
    /// Heat current out of the hot bath.
    pub heat_rate_hot: f64,
    /// `Var[W(T)]/T` for long windows.
    pub work_variance_rate: f64,
    /// `Var[Q_c(T)]/T` for long windows; only for `n_c = 0`.
    pub heat_variance_rate: Option<f64>,
    /// `Var[N_c]/⟨N_c⟩`; only for `n_c = 0` and a nonzero emission rate.
    pub fano_cold: Option<f64>,
}

impl EngineReport {
    /// Mean integrated work, cold heat and cold quanta over a window `t`.
    pub fn integrated(&self, t: f64) -> IntegratedMeans {
        IntegratedMeans {
            work: self.power * t,
            heat_cold: self.heat_rate_cold * t,
            quanta_cold: self.heat_rate_cold / self.params.omega_c * t,
        }
    }

    /// Relative mismatch of `heat_hot = power + heat_cold`.
    pub fn energy_balance_error(&self) -> f64 {
        let scale = self
            .heat_rate_hot
            .abs()
            .max(self.power.abs())
            .max(self.heat_rate_cold.abs());
        rel_gap(self.heat_rate_hot, self.power + self.heat_rate_cold, scale)
    }

    /// Largest relative mismatch among cold-emission, pair and net
    /// hot-absorption rates.
    pub fn quanta_rate_error(&self) -> f64 {
        let r = [self.cold_emission_rate, self.pair_rate, self.hot_absorption_rate];
        let scale = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        rel_gap(r[0], r[1], scale).max(rel_gap(r[1], r[2], scale))
    }
}

fn rel_gap(a: f64, b: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedMeans {
    pub work: f64,
    pub heat_cold: f64,
    pub quanta_cold: f64,
}

/// Full steady-state report for `p`.
pub fn engine_report(p: &EngineParams) -> Result<EngineReport> {
    report_for(&EngineModel::new(*p)?)
}

pub fn report_for(model: &EngineModel) -> Result<EngineReport> {
    let p = &model.params;
    let ops = &model.ops;
    let l = &model.liouvillian;
    let rho = l.steady_state()?;

    // Flows are evaluated on δ = ρ_ss − ρ_loc, which keeps their relative
    // precision when the coupling and all currents are tiny.
    let (reference, deviation) = thermal_deviation(model)?;
    let n = l.dim();
    let expect = |op: &crate::model::QuantumOperator, v: &[C64]| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += op[(i, k)] * v[i * n + k];
            }
        }
        acc.re
    };
    let delta_hot = expect(&ops.n_h_op, &deviation);
    let delta_cold = expect(&ops.n_c_op, &deviation);
    let mean_current = expect(&ops.current_op, &deviation) + expect(&ops.current_op, &reference);
    let pop_hot = thermal_excitation(p.n_h) + delta_hot;
    let pop_cold = thermal_excitation(p.n_c) + delta_cold;
    let analytic = p.equal_kappa().map(|_| analytic_current(p)).transpose()?;

    let pair_rate = 0.5 * mean_current;
    let cold_emission_rate = p.kappa_c * (2.0 * p.n_c + 1.0) * delta_cold;
    let hot_absorption_rate = -p.kappa_h * (2.0 * p.n_h + 1.0) * delta_hot;

    let current = Correlator::TwoPoint {
        x: &ops.current_op,
        y: &ops.current_op,
    };
    let current_noise = integrate_correlation(l, rho, current, true)?.re;
    // Var[W]/T = 2V² ∫ Re⟨δI δI(τ)⟩, with V = (ω_h − ω_c)/2 per unit charge
    let half_pair = 0.5 * p.pair_energy();
    let work_variance_rate = 2.0 * half_pair * half_pair * current_noise;

    let (heat_variance_rate, fano_cold) = if p.n_c == 0.0 {
        let g2 = integrate_correlation(l, rho, StrokePanel::G2.correlator(ops), true)?.re;
        let k = p.kappa_c;
        let quanta_var = 2.0 * k * k * g2 + k * pop_cold;
        let mean_rate = k * pop_cold;
        let fano = (mean_rate > 0.0).then(|| quanta_var / mean_rate);
        (Some(p.omega_c * p.omega_c * quanta_var), fano)
    } else {
        (None, None)
    };

    Ok(EngineReport {
        params: *p,
        mean_current,
        analytic_current: analytic,
        pop_hot,
        pop_cold,
        pair_rate,
        cold_emission_rate,
        hot_absorption_rate,
        power: pair_rate * p.pair_energy(),
        heat_rate_cold: p.omega_c * cold_emission_rate,
        heat_rate_hot: p.omega_h * hot_absorption_rate,
        work_variance_rate,
        heat_variance_rate,
        fano_cold,
    })
}

fn thermal_excitation(n: f64) -> f64 {
    n / (2.0 * n + 1.0)
}

/// Vectorized product of the two bath-thermal qubit states, and the
/// traceless correction `δ` with `L(ρ_loc + δ) = 0`.
fn thermal_deviation(model: &EngineModel) -> Result<(Vec<C64>, Vec<C64>)> {
    let p = &model.params;
    let ops = &model.ops;
    let n = model.liouvillian.dim();
    let (a_h, a_c) = (thermal_excitation(p.n_h), thermal_excitation(p.n_c));
    let mut reference = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let hot = if ops.n_h_op[(i, i)].re > 0.5 { a_h } else { 1.0 - a_h };
        let cold = if ops.n_c_op[(i, i)].re > 0.5 { a_c } else { 1.0 - a_c };
        reference[i * n + i] = C64::new(hot * cold, 0.0);
    }
    // The local dissipators annihilate `ρ_loc`, leaving `−L ρ_loc = i[H, ρ_loc]`.
    let h = &ops.hamiltonian;
    let mut rhs = vec![C64::new(0.0, 0.0); n * n];
    for col in 0..n {
        for row in 0..n {
            let w = reference[col * n + col] - reference[row * n + row];
            rhs[col * n + row] = C64::new(0.0, 1.0) * h[(row, col)] * w;
        }
    }
    let deviation = model.liouvillian.restricted_solve(&rhs)?;
    Ok((reference, deviation))
}

/// Mean work, cold heat and cold quanta over a window `t`.
pub fn mean_integrated(p: &EngineParams, t: f64) -> Result<IntegratedMeans> {
    Ok(engine_report(p)?.integrated(t))
}

/// Exact mean and variance of cold-emission counts in a window `t` for a
/// stationary start:
///
/// `Var N(t) = μt + 2κ²∫₀^t (t−τ)[G(τ) − G(∞)] dτ`, with the double
/// integral reduced to two restricted solves,
/// `∫₀^t (t−τ)e^{Lτ}Q dτ = −t·L⁺Q + L⁺²(e^{Lt} − 1)Q`.
pub fn finite_window_counting(model: &EngineModel, t: f64) -> Result<(f64, f64)> {
    let p = &model.params;
    if p.n_c != 0.0 {
        return Err(EngineError::UnsupportedRestriction(
            "emission counting from G² assumes n_c = 0".into(),
        ));
    }
    let l = &model.liouvillian;
    let ops = &model.ops;
    let rho = l.steady_state()?;
    let k = p.kappa_c;
    let mu = k * rho.expectation(&ops.n_c_op).re;

    let corr = StrokePanel::G2.correlator(ops);
    let v = corr.seed(rho).vectorize();
    let pv = l.stationary_projection(&v)?;
    let q: Vec<C64> = v.iter().zip(&pv).map(|(a, b)| a - b).collect();
    let long = l.resolvent_integral(&v)?; // = −L⁺Q v
    let eq = l.propagate_vec(&q, t)?;
    let w: Vec<C64> = eq.iter().zip(&q).map(|(a, b)| a - b).collect();
    let y = l.restricted_solve(&w)?;
    let z = l.restricted_solve(&y)?;
    let total: Vec<C64> = long.iter().zip(&z).map(|(a, b)| a * t + b).collect();
    let y_obs = corr.observable();
    let n = l.dim();
    let mut integral = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            integral += y_obs[(i, j)] * total[i * n + j];
        }
    }
    Ok((mu * t, mu * t + 2.0 * k * k * integral.re))
}

/// Sweepable parameter. `Kappa` and `Lambda` set both baths/qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Kappa,
    Lambda,
    NHot,
    NCold,
    EJ,
}

impl SweepParam {
    pub fn apply(self, p: &mut EngineParams, value: f64) {
        match self {
            SweepParam::Kappa => {
                p.kappa_h = value;
                p.kappa_c = value;
            }
            SweepParam::Lambda => {
                p.lambda_h = value;
                p.lambda_c = value;
            }
            SweepParam::NHot => p.n_h = value,
            SweepParam::NCold => p.n_c = value,
            SweepParam::EJ => p.e_j = value,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(SweepParam::Kappa),
            "lambda" => Ok(SweepParam::Lambda),
            "n_h" => Ok(SweepParam::NHot),
            "n_c" => Ok(SweepParam::NCold),
            "E_J" | "e_j" => Ok(SweepParam::EJ),
            other => Err(EngineError::invalid("axis", format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl SweepAxis {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 || !self.min.is_finite() || !self.max.is_finite() || self.max < self.min {
            return Err(EngineError::invalid(
                "axis",
                format!("bad axis {:?} [{}, {}] x{}", self.param, self.min, self.max, self.count),
            ));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let n = (self.count - 1) as f64;
        match self.spacing {
            Spacing::Linear => Ok((0..self.count)
                .map(|i| self.min + (self.max - self.min) * i as f64 / n)
                .collect()),
            Spacing::Log => {
                if self.min <= 0.0 {
                    return Err(EngineError::invalid("axis", "log spacing needs a positive minimum"));
                }
                let (a, b) = (self.min.ln(), self.max.ln());
                Ok((0..self.count).map(|i| (a + (b - a) * i as f64 / n).exp()).collect())
            }
        }
    }
}

/// One grid point.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: Vec<usize>,
    pub params: EngineParams,
    pub report: std::result::Result<EngineReport, EngineError>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimum {
    pub params: EngineParams,
    pub power: f64,
}

/// Completed sweep; cells in row-major order over `axes`.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub axes: Vec<SweepAxis>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    /// Cell with the highest power, if any cell succeeded.
    pub fn argmax(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter_map(|c| c.report.as_ref().ok().map(|r| (c, r.power)))
            .fold(None, |best: Option<(&SweepCell, f64)>, (c, pw)| match best {
                Some((_, b)) if b >= pw => best,
                _ => Some((c, pw)),
            })
            .map(|(c, _)| c)
    }

    /// Golden-section refinement of the argmax along κ, between the argmax
    /// cell's grid neighbours, at the argmax cell's other parameters.
    pub fn refine_kappa(&self) -> Result<Option<Optimum>> {
        let Some(axis_pos) = self.axes.iter().position(|a| a.param == SweepParam::Kappa) else {
            return Ok(None);
        };
        let Some(best) = self.argmax() else {
            return Ok(None);
        };
        let values = self.axes[axis_pos].values()?;
        let i = best.index[axis_pos];
        let lo = values[i.saturating_sub(1)];
        let hi = values[(i + 1).min(values.len() - 1)];
        if lo == hi {
            return Ok(None);
        }
        let template = best.params;
        let power = |k: f64| -> Result<f64> {
            let r = engine_report(&template.with_kappa(k))?;
            Ok(r.power)
        };
        let k = golden_max(power, lo, hi, 1e-9 * hi)?;
        Ok(Some(Optimum {
            params: template.with_kappa(k),
            power: power(k)?,
        }))
    }
}

/// Maximizes a unimodal `f` on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (b - a) > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Whether grid cells run on the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

/// Evaluates [`engine_report`] on the Cartesian product of `axes`.
pub fn sweep(template: &EngineParams, axes: &[SweepAxis]) -> Result<SweepGrid> {
    sweep_with(template, axes, Execution::Parallel)
}

pub fn sweep_with(template: &EngineParams, axes: &[SweepAxis], exec: Execution) -> Result<SweepGrid> {
    let values: Vec<Vec<f64>> = axes.iter().map(SweepAxis::values).collect::<Result<_>>()?;
    let total: usize = values.iter().map(Vec::len).product();
    let cell = |flat: usize| {
        let mut index = vec![0; values.len()];
        let mut rem = flat;
        for (d, vals) in values.iter().enumerate().rev() {
            index[d] = rem % vals.len();
            rem /= vals.len();
        }
        let mut params = *template;
        for (d, axis) in axes.iter().enumerate() {
            axis.param.apply(&mut params, values[d][index[d]]);
        }
        SweepCell {
            report: engine_report(&params),
            index,
            params,
        }
    };
    let cells = match exec {
        Execution::Serial => (0..total).map(cell).collect(),
        Execution::Parallel => (0..total).into_par_iter().map(cell).collect(),
    };
    Ok(SweepGrid {
        axes: axes.to_vec(),
        cells,
    })
}
