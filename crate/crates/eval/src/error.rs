use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("metric: {0}")]
    Metric(String),
    #[error(transparent)]
    Core(#[from] arbor_core::Error),
    #[error(transparent)]
    Sim(#[from] arbor_sim::SimError),
}

impl EvalError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 for a broken numerical invariant, 1 for
    /// anything wrong with the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(
                arbor_core::Error::InvariantViolation(_) | arbor_core::Error::SingularCovariance,
            ) => 2,
            _ => 1,
        }
    }
}
