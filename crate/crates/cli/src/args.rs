use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "qengine", version, about = "Two-qubit thermoelectric heat engine simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Parameter file (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,

    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Reads the config's frequencies as `angular` (rad/ns) or `cycles`
    /// (GHz), overriding the file.
    #[arg(long)]
    pub convention: Option<String>,

    /// Also evaluates the independent quadrature and ODE oracles and records
    /// their deviations.
    #[arg(long)]
    pub cross_check: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state currents, heat flows and long-time fluctuations.
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Power and fluctuation grid over κ and λ.
    Sweep {
        #[command(flatten)]
        common: Common,

        /// `NAME:MIN:MAX:COUNT[:log|linear]` with NAME `kappa` (config
        /// frequency units) or `lambda` (rad); repeatable.
        #[arg(long = "axis")]
        axes: Vec<String>,

        /// Evaluates cells on the calling thread only.
        #[arg(long)]
        serial: bool,
    },
    /// Two-time correlation functions after heat-bath jumps.
    Correlate {
        #[command(flatten)]
        common: Common,

        /// `all` or a comma list of g2, hotjump_current, current_coldpop,
        /// hotjump_coldpop.
        #[arg(long, default_value = "all")]
        which: String,

        /// Bath couplings in config frequency units, one output per value.
        #[arg(long, value_delimiter = ',')]
        kappa_list: Option<Vec<String>>,

        /// Largest delay, in units of 1/E_J.
        #[arg(long, default_value_t = 30.0)]
        tau_max: f64,

        #[arg(long, default_value_t = 600)]
        tau_points: usize,
    },
    /// Quantum-jump ensemble counting statistics.
    Trajectories {
        #[command(flatten)]
        common: Common,

        /// Number of trajectories.
        #[arg(long = "traj-N")]
        n: usize,

        /// Window in ns; defaults to 100/E_J.
        #[arg(long = "traj-T")]
        t: Option<f64>,

        /// Step in ns; defaults to the largest admissible step.
        #[arg(long)]
        dt: Option<f64>,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Writes every jump to `jumps.csv`.
        #[arg(long)]
        dump_jumps: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Steady { .. } => "steady",
            Command::Sweep { .. } => "sweep",
            Command::Correlate { .. } => "correlate",
            Command::Trajectories { .. } => "trajectories",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Steady { common }
            | Command::Sweep { common, .. }
            | Command::Correlate { common, .. }
            | Command::Trajectories { common, .. } => common,
        }
    }
}
