use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: entry {index} is {value}")]
    InvalidState { index: usize, value: f64 },

    #[error("simulation diverged at step {step} (state entry {index})")]
    DivergedSimulation { step: usize, index: usize },

    #[error("model evaluation produced a non-finite value")]
    DivergedModel,

    #[error("maximum likelihood fit failed after {iterations} iterations")]
    FitFailed { iterations: usize, best: Vec<f64> },

    #[error("matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("every candidate action failed to evaluate")]
    SelectionFailed,

    #[error("training diverged: loss {loss} at step {step}")]
    TrainingDiverged { loss: f64, step: usize },

    #[error("Cholesky factorization failed at jitter {jitter:e}")]
    CholeskyFailed { jitter: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(String::from(msg))
}
