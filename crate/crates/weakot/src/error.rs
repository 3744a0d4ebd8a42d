use thiserror::Error;

/// Errors for measure construction and solver runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("atom budget exceeded: {requested} atoms > budget {budget}")]
    AtomBudget { requested: usize, budget: usize },

    #[error("zero-mass row at index {0}")]
    ZeroMassRow(usize),

    #[error("operation requires dimension 1, measure has dimension {0}")]
    NotOneDimensional(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear program infeasible: {0}")]
    Infeasible(String),

    #[error("measures are not in convex order")]
    NotInConvexOrder,

    #[error("no convergence after {iterations} iterations (last gap {last_gap:e})")]
    NonConvergence { iterations: usize, last_gap: f64 },

    #[error("map not invertible: {0}")]
    NonInvertible(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
