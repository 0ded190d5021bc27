use thiserror::Error;

/// Errors surfaced by the simulator, the network core and the pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("architecture mismatch: expected {expected}, found {found}")]
    Arch { expected: String, found: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("line {line}: {message}")]
    Decode { line: usize, message: String },

    #[error("unknown controller `{0}`")]
    UnknownController(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors that stem from how the tool was invoked rather than from
    /// a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Arch { .. } | Error::UnknownController(_) | Error::Shape(_)
        )
    }
}
