use thiserror::Error;

/// Errors raised by the solvers and their configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of range; `key` is the dotted config path.
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A non-finite value appeared during iteration `iter`.
    #[error("non-finite {what} at iteration {iter}")]
    NonFinite { iter: usize, what: String },

    #[error("non-finite gradient for particle {index}")]
    NonFiniteGradient { index: usize },

    #[error("importance density vanished at a drawn sample for particle input {0:?}")]
    ImportanceUnderflow(Vec<f64>),

    #[error("partition function underflow for source point {index} ({point:?})")]
    PartitionUnderflow { index: usize, point: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("output bins capture only {coverage:.6} of the channel mass at input {input}")]
    Coverage { input: f64, coverage: f64 },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
