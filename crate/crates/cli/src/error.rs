use std::path::Path;
use std::process::ExitCode;

use gaitfield_autodiff::TensorError;
use gaitfield_nas::NasError;
use thiserror::Error;

/// Failures mapped onto the stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configs or input files (exit 2).
    #[error("{0}")]
    Input(String),
    /// A degenerate frame under the error policy (exit 3).
    #[error("{0}")]
    Degenerate(String),
    /// Non-finite loss or gradient (exit 4).
    #[error("{0}")]
    Numeric(String),
    /// Gradient check failure (exit 5).
    #[error("{0}")]
    Gradcheck(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Gradcheck(_) => 5,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<gaitfield_core::Error> for CliError {
    fn from(e: gaitfield_core::Error) -> Self {
        use gaitfield_core::Error as E;
        match e {
            E::EmptyBoundary { .. } | E::Degenerate(_) => CliError::Degenerate(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<NasError> for CliError {
    fn from(e: NasError) -> Self {
        match e {
            NasError::Data(e) => e.into(),
            NasError::Tensor(e) => e.into(),
            NasError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
