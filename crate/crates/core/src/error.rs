use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid level of construction: eta = {eta} must be at least d = {d} (d >= 1)")]
    InvalidLevel { eta: usize, d: usize },

    #[error("schedule for dimension {dim} defines {have} levels but {need} are required")]
    ScheduleTooShort { dim: usize, need: usize, have: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("unsupported Matern smoothness nu = {0} (supported: 0.5, 1.5, 2.5, 3.5)")]
    UnsupportedSmoothness(f64),

    #[error("matrix of size {size} is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { size: usize, pivot: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mean basis is singular on the design")]
    SingularBasis,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("problem size N = {n} exceeds the dense guard of {guard}")]
    TooLarge { n: usize, guard: usize },

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
