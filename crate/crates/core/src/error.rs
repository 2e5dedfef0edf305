use thiserror::Error;

/// Errors raised by the pipeline stages.
///
/// The CLI maps [`Error::Io`] to exit code 2 and every other variant to
/// exit code 1 (validation / configuration failures).
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input record, with the 1-based line it came from.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Data violating a documented invariant (scores, shapes, ranges).
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration problem, e.g. a subject missing from the subject map.
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix dimensions that do not conform.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
