use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration is inconsistent or cannot produce any admissible model.
    #[error("configuration error: {0}")]
    Config(String),

    /// The information matrix is singular or too badly conditioned to invert.
    #[error("singular information matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    /// The slope heuristic could not produce a positive penalty.
    #[error("penalty calibration failed: {0}")]
    Calibration(String),

    /// A count series could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
