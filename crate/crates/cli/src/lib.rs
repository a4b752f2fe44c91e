//! Command implementations behind the `qengine` binary: config loading,
//! dispatch, CSV/JSON emission, SI conversion and run manifests.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;
pub mod units;

pub use args::{Cli, Command, Common};
pub use error::{CliError, CliResult};
