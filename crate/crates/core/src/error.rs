use thiserror::Error;

/// Errors raised anywhere in the engine pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing config field `{0}`")]
    MissingField(String),

    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical breakdown in {context}: {detail}")]
    NumericalBreakdown { context: String, detail: String },

    #[error("solution is not unique: {0}")]
    NonUniqueSolution(String),

    #[error("unsupported restriction: {0}")]
    UnsupportedRestriction(String),

    #[error("conditioning on a null event: jump norm {0:e}")]
    NullEvent(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),
}

impl EngineError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        EngineError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn breakdown(context: &str, detail: impl Into<String>) -> Self {
        EngineError::NumericalBreakdown {
            context: context.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;
