use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("point {point:?} lies outside the search space")]
    OutOfBounds { point: Vec<f64> },

    #[error("expected a point of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("budget exhausted: requested {requested} evaluations, {remaining} remaining")]
    BudgetExhausted { requested: usize, remaining: usize },

    #[error("objective failed at {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("truth file shape mismatch: {0}")]
    TruthShape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpace(_) => "invalid_space",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::Evaluation { .. } => "evaluation",
            Error::EmptyPointSet => "empty_point_set",
            Error::Config(_) => "config",
            Error::Protocol(_) => "protocol",
            Error::Numerical(_) => "numerical",
            Error::TruthShape(_) => "truth_shape",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
