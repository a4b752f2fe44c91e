use std::io;
use std::path::PathBuf;

use thiserror::Error;

use qengine::EngineError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error("usage: {0}")]
    Usage(String),

    #[error("cannot read `{}`: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write `{}`: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },

    #[error("cannot encode output: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 configuration or usage, 3 numerical breakdown, 4 non-unique steady
    /// state, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Read { .. } => 2,
            CliError::Engine(e) => match e {
                EngineError::Parse { .. }
                | EngineError::MissingField(_)
                | EngineError::Invalid { .. }
                | EngineError::UnsupportedRestriction(_) => 2,
                EngineError::NonUniqueSolution(_) => 4,
                EngineError::NumericalBreakdown { .. }
                | EngineError::Dimension(_)
                | EngineError::NullEvent(_)
                | EngineError::InvalidState(_) => 3,
            },
            CliError::Write { .. } | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
