use thiserror::Error;

/// Errors raised while building or analysing a discrimination instance.
#[derive(Debug, Error)]
pub enum UsdError {
    #[error("malformed instance: {0}")]
    Malformed(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state {index} has norm^2 {norm_sq} (tolerance 1e-9); pass normalize to rescale")]
    NotNormalized { index: usize, norm_sq: f64 },

    #[error("invalid priors: {0}")]
    InvalidPriors(String),

    #[error("states are linearly dependent (smallest Gram eigenvalue {0:e})")]
    LinearlyDependent(f64),

    #[error("need at least 2 states in dimension >= N (got N = {n}, d = {dim})")]
    TooFewStates { n: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is not on the critical region (sigma_min = {0:e})")]
    NotCritical(f64),

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),

    #[error("invalid case filter `{0}` (use [a-z0-9.-] and `*`)")]
    UnknownFilter(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, UsdError>;
