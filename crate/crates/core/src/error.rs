use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation is not orthonormal with determinant +1 (deviation {0:e})")]
    InvalidRotation(f64),

    #[error("invalid camera model: {0}")]
    InvalidCamera(String),

    #[error("invalid NDVI thresholds: lo ({lo}) must be below hi ({hi})")]
    InvalidThreshold { lo: f64, hi: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("all association probabilities are zero")]
    DegenerateDistribution,

    #[error("innovation covariance is not invertible")]
    SingularCovariance,

    #[error("field map is empty")]
    EmptyMap,

    #[error("no pose within {max_gap} s of t = {timestamp}")]
    StalePose { timestamp: f64, max_gap: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}
