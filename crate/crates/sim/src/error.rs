use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulator spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible trajectory: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Core(#[from] arbor_core::Error),
}
