use gaitfield_autodiff::{ParamStore, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NasError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] gaitfield_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot split dataset: {0}")]
    Split(String),
    #[error("invalid sample set: {0}")]
    Samples(String),
    #[error("non-finite {phase} loss at step {step}")]
    NonFiniteLoss {
        phase: Phase,
        step: usize,
        /// Parameters before the failing step.
        last_good: Box<ParamStore>,
    },
    #[error("invalid architecture: {0}")]
    Architecture(String),
}

/// Which optimization loop produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Weight update on the training half during search.
    Weights,
    /// Architecture update on the validation half.
    Alpha,
    Retrain,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Weights => "w",
            Phase::Alpha => "alpha",
            Phase::Retrain => "retrain",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Result<T> = std::result::Result<T, NasError>;
