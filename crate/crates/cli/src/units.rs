//! Conversion of internal quantities (ħ = e = 1, rad/ns, ns) to SI.
//!
//! Nothing outside this module multiplies by physical constants.

use serde::Serialize;

use qengine::model::FrequencyConvention;
use qengine::{engine_report, EngineParams, EngineReport, Result};

/// Coulomb.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Joule-second.
pub const HBAR: f64 = 1.054571817e-34;

const PER_NS: f64 = 1e9;
const FEMTO: f64 = 1e15;

/// Joules in `ħ·(1 rad/ns)`.
pub fn energy_j(e: f64) -> f64 {
    e * HBAR * PER_NS
}

pub fn power_w(p: f64) -> f64 {
    energy_j(p) * PER_NS
}

pub fn power_fw(p: f64) -> f64 {
    power_w(p) * FEMTO
}

pub fn current_a(i: f64) -> f64 {
    i * ELEMENTARY_CHARGE * PER_NS
}

pub fn rate_per_s(r: f64) -> f64 {
    r * PER_NS
}

/// J²/s from an internal `energy²/ns`.
pub fn energy_variance_rate(v: f64) -> f64 {
    energy_j(1.0).powi(2) * v * PER_NS
}

#[derive(Debug, Clone, Serialize)]
pub struct SiReport {
    pub current_a: f64,
    pub analytic_current_a: Option<f64>,
    pub pair_rate_per_s: f64,
    pub cold_emission_rate_per_s: f64,
    pub hot_absorption_rate_per_s: f64,
    pub power_fw: f64,
    pub heat_rate_cold_fw: f64,
    pub heat_rate_hot_fw: f64,
    pub work_variance_rate_j2_per_s: f64,
    pub heat_variance_rate_j2_per_s: Option<f64>,
    pub fano_cold: Option<f64>,
}

impl SiReport {
    pub fn from_internal(r: &EngineReport) -> Self {
        Self {
            current_a: current_a(r.mean_current),
            analytic_current_a: r.analytic_current.map(current_a),
            pair_rate_per_s: rate_per_s(r.pair_rate),
            cold_emission_rate_per_s: rate_per_s(r.cold_emission_rate),
            hot_absorption_rate_per_s: rate_per_s(r.hot_absorption_rate),
            power_fw: power_fw(r.power),
            heat_rate_cold_fw: power_fw(r.heat_rate_cold),
            heat_rate_hot_fw: power_fw(r.heat_rate_hot),
            work_variance_rate_j2_per_s: energy_variance_rate(r.work_variance_rate),
            heat_variance_rate_j2_per_s: r.heat_variance_rate.map(energy_variance_rate),
            fano_cold: r.fano_cold,
        }
    }
}

/// Output power for the same config numbers read both ways, plus the value
/// obtained when rates follow the cycle reading but the pair energy is taken
/// as `ħ·(f_h − f_c)` with `f` in GHz.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConventionComparison {
    pub cycles_fw: f64,
    pub angular_fw: f64,
    pub mixed_fw: f64,
}

impl ConventionComparison {
    pub fn for_params(p: &EngineParams) -> Result<Self> {
        let cycles = engine_report(&p.reinterpret(FrequencyConvention::Cycles))?;
        let angular = engine_report(&p.reinterpret(FrequencyConvention::Angular))?;
        let f_gap = cycles.params.to_config_units(cycles.params.pair_energy());
        Ok(Self {
            cycles_fw: power_fw(cycles.power),
            angular_fw: power_fw(angular.power),
            mixed_fw: power_fw(cycles.pair_rate * f_gap),
        })
    }

    /// Conventions whose power lies within `rel` of `target_fw`.
    pub fn matching(&self, target_fw: f64, rel: f64) -> Vec<FrequencyConvention> {
        [
            (FrequencyConvention::Cycles, self.cycles_fw),
            (FrequencyConvention::Angular, self.angular_fw),
        ]
        .into_iter()
        .filter(|(_, v)| ((v - target_fw) / target_fw).abs() <= rel)
        .map(|(c, _)| c)
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_power_is_hbar_per_ns_squared() {
        assert!((power_w(1.0) - HBAR * 1e18).abs() < 1e-40);
        assert!((current_a(1.0) - 1.602176634e-10).abs() < 1e-22);
    }

    #[test]
    fn angular_power_is_cycles_over_four_pi_squared() {
        let c = ConventionComparison::for_params(&EngineParams::baseline()).unwrap();
        let ratio = c.cycles_fw / c.angular_fw;
        assert!((ratio - (2.0 * std::f64::consts::PI).powi(2)).abs() < 1e-9 * ratio);
        assert!((c.cycles_fw / c.mixed_fw - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    }
}
