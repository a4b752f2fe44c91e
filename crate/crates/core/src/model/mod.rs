//! Engine parameters and the two-qubit operator set.
//!
//! Units: ħ = 1 and every energy is an angular frequency in rad/ns. The
//! product basis is ordered `|g_h g_c⟩, |g_h e_c⟩, |e_h g_c⟩, |e_h e_c⟩`,
//! i.e. index `2·hot + cold` with the cold qubit as the fast index.

pub mod config;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::numerics::{kron, C64};

pub use crate::numerics::ComplexMatrix as QuantumOperator;
pub use config::{load_params, parse_value, CONFIG_KEYS};

/// Dimension of the two-qubit Hilbert space.
pub const DIM: usize = 4;

/// How frequency-like numbers in a config file are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyConvention {
    /// Values are angular frequencies in rad/ns and used as-is.
    Angular,
    /// Values are cycle frequencies in GHz and multiplied by 2π.
    Cycles,
}

impl FrequencyConvention {
    pub fn to_angular(self) -> f64 {
        match self {
            FrequencyConvention::Angular => 1.0,
            FrequencyConvention::Cycles => 2.0 * PI,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyConvention::Angular => "angular",
            FrequencyConvention::Cycles => "cycles",
        }
    }
}

impl fmt::Display for FrequencyConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FrequencyConvention {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "angular" => Ok(FrequencyConvention::Angular),
            "cycles" => Ok(FrequencyConvention::Cycles),
            other => Err(EngineError::invalid(
                "frequency_convention",
                format!("expected `angular` or `cycles`, got `{other}`"),
            )),
        }
    }
}

/// Physical parameters, stored in internal angular units (rad/ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub omega_h: f64,
    pub omega_c: f64,
    pub e_j: f64,
    pub lambda_h: f64,
    pub lambda_c: f64,
    pub kappa_h: f64,
    pub kappa_c: f64,
    pub n_h: f64,
    pub n_c: f64,
    /// Convention the parameters were read in; internal values are already
    /// converted.
    pub frequency_convention: FrequencyConvention,
}

impl EngineParams {
    /// Reference operating point: E_J = 2π·0.3, ω_h = 2π·13.5, ω_c = 2π·3.0
    /// (rad/ns), n_h = 1.5, n_c = 0, λ_h = λ_c = π/4 and κ at the power
    /// optimum E_J'/2.
    pub fn baseline() -> Self {
        let tau = 2.0 * PI;
        let e_j = tau * 0.3;
        Self {
            omega_h: tau * 13.5,
            omega_c: tau * 3.0,
            e_j,
            lambda_h: PI / 4.0,
            lambda_c: PI / 4.0,
            kappa_h: 0.5 * e_j,
            kappa_c: 0.5 * e_j,
            n_h: 1.5,
            n_c: 0.0,
            frequency_convention: FrequencyConvention::Cycles,
        }
    }

    /// Effective exchange coupling `E_J·sin(2λ_h)·sin(2λ_c)`.
    pub fn e_j_prime(&self) -> f64 {
        self.e_j * (2.0 * self.lambda_h).sin() * (2.0 * self.lambda_c).sin()
    }

    /// Energy per transferred Cooper pair, `2eV = ω_h − ω_c` (ħ = 1).
    pub fn pair_energy(&self) -> f64 {
        self.omega_h - self.omega_c
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa_h = kappa;
        self.kappa_c = kappa;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_h = lambda;
        self.lambda_c = lambda;
        self
    }

    pub fn equal_kappa(&self) -> Option<f64> {
        (self.kappa_h == self.kappa_c).then_some(self.kappa_h)
    }

    /// Converts an internal frequency back to the number written in the
    /// config under the active convention.
    pub fn to_config_units(&self, internal: f64) -> f64 {
        internal / self.frequency_convention.to_angular()
    }

    /// The same config numbers read under `convention`: ω, E_J and κ are
    /// rescaled, dimensionless fields are kept.
    pub fn reinterpret(self, convention: FrequencyConvention) -> Self {
        let f = convention.to_angular() / self.frequency_convention.to_angular();
        Self {
            omega_h: self.omega_h * f,
            omega_c: self.omega_c * f,
            e_j: self.e_j * f,
            kappa_h: self.kappa_h * f,
            kappa_c: self.kappa_c * f,
            frequency_convention: convention,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_h", self.omega_h),
            ("omega_c", self.omega_c),
            ("E_J", self.e_j),
            ("lambda_h", self.lambda_h),
            ("lambda_c", self.lambda_c),
            ("kappa_h", self.kappa_h),
            ("kappa_c", self.kappa_c),
            ("n_h", self.n_h),
            ("n_c", self.n_c),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(EngineError::invalid(name, format!("non-finite value {v}")));
            }
        }
        if self.omega_c <= 0.0 {
            return Err(EngineError::invalid("omega_c", "must be positive"));
        }
        if self.omega_h <= self.omega_c {
            return Err(EngineError::invalid(
                "omega_h",
                format!("must exceed omega_c ({} <= {})", self.omega_h, self.omega_c),
            ));
        }
        if self.e_j < 0.0 {
            return Err(EngineError::invalid("E_J", "must be non-negative"));
        }
        for (name, k) in [("kappa_h", self.kappa_h), ("kappa_c", self.kappa_c)] {
            if k <= 0.0 {
                return Err(EngineError::invalid(
                    name,
                    "must be positive (κ = 0 leaves a continuum of steady states)",
                ));
            }
        }
        for (name, n) in [("n_h", self.n_h), ("n_c", self.n_c)] {
            if n < 0.0 {
                return Err(EngineError::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Dissipation channel of the local master equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    HotEmit,
    HotAbsorb,
    ColdEmit,
    ColdAbsorb,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::HotEmit,
        Channel::HotAbsorb,
        Channel::ColdEmit,
        Channel::ColdAbsorb,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Channel::HotEmit => "hot_emit",
            Channel::HotAbsorb => "hot_absorb",
            Channel::ColdEmit => "cold_emit",
            Channel::ColdAbsorb => "cold_absorb",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct JumpChannel {
    pub operator: QuantumOperator,
    /// Rate in 1/ns.
    pub rate: f64,
    pub channel: Channel,
}

impl JumpChannel {
    pub fn is_active(&self) -> bool {
        self.rate > 0.0
    }
}

/// All operators needed downstream, in the fixed product basis.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub sigma_plus_h: QuantumOperator,
    pub sigma_minus_h: QuantumOperator,
    pub sigma_plus_c: QuantumOperator,
    pub sigma_minus_c: QuantumOperator,
    pub n_h_op: QuantumOperator,
    pub n_c_op: QuantumOperator,
    pub hamiltonian: QuantumOperator,
    /// Current operator in units of e·rad/ns.
    pub current_op: QuantumOperator,
    pub jump_ops: Vec<JumpChannel>,
}

impl OperatorSet {
    pub fn new(p: &EngineParams) -> Self {
        let l = LadderOps::new();
        OperatorSet {
            hamiltonian: build_hamiltonian(p),
            current_op: build_current_operator(p),
            jump_ops: build_jump_operators(p),
            n_h_op: &l.sp_h * &l.sm_h,
            n_c_op: &l.sp_c * &l.sm_c,
            sigma_plus_h: l.sp_h,
            sigma_minus_h: l.sm_h,
            sigma_plus_c: l.sp_c,
            sigma_minus_c: l.sm_c,
        }
    }

    pub fn jump(&self, channel: Channel) -> &JumpChannel {
        &self.jump_ops[channel.index()]
    }

    pub fn identity(&self) -> QuantumOperator {
        QuantumOperator::identity(DIM)
    }
}

struct LadderOps {
    sp_h: QuantumOperator,
    sm_h: QuantumOperator,
    sp_c: QuantumOperator,
    sm_c: QuantumOperator,
}

impl LadderOps {
    fn new() -> Self {
        // |e⟩⟨g| with g = 0, e = 1
        let sp = QuantumOperator::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let sm = sp.adjoint();
        let id = QuantumOperator::identity(2);
        Self {
            sp_h: kron(&sp, &id),
            sm_h: kron(&sm, &id),
            sp_c: kron(&id, &sp),
            sm_c: kron(&id, &sm),
        }
    }
}

/// Resonant exchange Hamiltonian `(E_J'/2)(σ⁻_h σ⁺_c + σ⁺_h σ⁻_c)`.
pub fn build_hamiltonian(p: &EngineParams) -> QuantumOperator {
    let l = LadderOps::new();
    let hop = &(&l.sm_h * &l.sp_c) + &(&l.sp_h * &l.sm_c);
    hop.scale_real(0.5 * p.e_j_prime())
}

/// Junction current `−i·E_J'·(σ⁻_h σ⁺_c − σ⁺_h σ⁻_c)` in units of e·rad/ns.
/// Equal to `(2/i)[n̂_c, H]`.
pub fn build_current_operator(p: &EngineParams) -> QuantumOperator {
    let l = LadderOps::new();
    let diff = &(&l.sm_h * &l.sp_c) - &(&l.sp_h * &l.sm_c);
    diff.scale(C64::new(0.0, -p.e_j_prime()))
}

/// Bath channels in [`Channel::ALL`] order. Zero-rate channels are kept.
pub fn build_jump_operators(p: &EngineParams) -> Vec<JumpChannel> {
    let l = LadderOps::new();
    vec![
        JumpChannel {
            operator: l.sm_h,
            rate: p.kappa_h * (p.n_h + 1.0),
            channel: Channel::HotEmit,
        },
        JumpChannel {
            operator: l.sp_h,
            rate: p.kappa_h * p.n_h,
            channel: Channel::HotAbsorb,
        },
        JumpChannel {
            operator: l.sm_c,
            rate: p.kappa_c * (p.n_c + 1.0),
            channel: Channel::ColdEmit,
        },
        JumpChannel {
            operator: l.sp_c,
            rate: p.kappa_c * p.n_c,
            channel: Channel::ColdAbsorb,
        },
    ]
}

/// Expectation value `Tr[op·ρ]`.
pub fn expectation(op: &QuantumOperator, rho: &QuantumOperator) -> C64 {
    let n = op.rows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += op[(i, k)] * rho[(k, i)];
        }
    }
    acc
}
