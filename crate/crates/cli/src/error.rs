use thiserror::Error;

/// Failures surfaced by the command-line driver, each with its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, flag or input data. Exit status 2.
    #[error("config error: {0}")]
    Config(String),

    /// The solver hit a non-finite value or another numerical failure.
    /// Exit status 1.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Some sweep points failed; the rest were written. Exit status 1.
    #[error("{failed} of {total} sweep points failed")]
    PartialSweep { failed: usize, total: usize },

    /// `check` found a gradient mismatch. Exit status 1.
    #[error("{0} gradient checks exceeded tolerance")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<ccwgd_core::Error> for CliError {
    fn from(e: ccwgd_core::Error) -> Self {
        use ccwgd_core::Error as E;
        match e {
            E::Config { .. } | E::InvalidInput(_) | E::Dimension { .. } | E::Coverage { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
