use actorsim_core::Error as CoreError;

/// Harness-level failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error(transparent)]
    Numerical(#[from] CoreError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::RunFailed(_) => 3,
            HarnessError::Numerical(CoreError::InvalidArgument(_)) => 2,
            HarnessError::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
