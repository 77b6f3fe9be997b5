use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter violates its invariant (e.g. a non-positive time constant).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An input lies outside the domain of a function (e.g. a non-finite time).
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller-supplied argument is unusable (bad bin width, length mismatch, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Not enough events or bins to produce a meaningful estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A text input could not be parsed; `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// A structured config failed validation; `path` names the offending field.
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
