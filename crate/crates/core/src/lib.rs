//! Steady-state transport, fluctuations and jump-conditioned correlations of
//! a two-qubit thermoelectric engine driven by Cooper-pair tunnelling.
//!
//! Internal units: ħ = e = 1, energies and rates in rad/ns, times in ns.

pub mod correlators;
pub mod error;
pub mod liouville;
pub mod model;
pub mod numerics;
pub mod statistics;
pub mod trajectories;

pub use correlators::{CorrelationSeries, Correlator, StrokePanel, TauGrid};
pub use error::{EngineError, Result};
pub use liouville::{build_liouvillian, DensityMatrix, Liouvillian};
pub use model::{
    config::load_params, Channel, EngineParams, FrequencyConvention, JumpChannel, OperatorSet,
    QuantumOperator,
};
pub use numerics::{ComplexMatrix, C64};
pub use statistics::{
    analytic_current, engine_report, optimal_kappa, sweep, EngineModel, EngineReport, Spacing,
    SweepAxis, SweepGrid, SweepParam,
};
pub use trajectories::{
    ensemble_average_state, ensemble_counts, run_trajectory, CountingStatistics, JumpEvent,
    TrajectoryRecord,
};
