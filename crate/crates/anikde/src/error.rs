use std::path::PathBuf;

use anikde_core::Error as CoreError;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// 1 for usage, config and IO problems, 2 for failed checks, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Parse { .. } => 1,
            CliError::Verification(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } | CoreError::DimensionMismatch { .. } | CoreError::OutOfScope(_) => {
                CliError::Config(e.to_string())
            }
            CoreError::Numeric(_) | CoreError::Construction(_) | CoreError::Efficiency(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
