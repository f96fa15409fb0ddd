use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported relaxation: {0}")]
    Unsupported(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: usize },

    #[error("column {0} has zero variance")]
    ZeroVariance(String),

    #[error("solver did not certify optimality: {0}")]
    Solver(String),

    #[error("iteration limit reached at residual {residual:.2e} after {iterations} iterations")]
    IterationLimit { residual: f64, iterations: usize },

    #[error("relaxation is infeasible (dual ray of length {})", ray.len())]
    Infeasible { ray: Vec<f64> },

    #[error("relaxation is unbounded (primal ray of length {})", ray.len())]
    Unbounded { ray: Vec<f64> },

    #[error("gap undefined for non-positive lower bound (absolute difference {abs_diff})")]
    UndefinedGap { abs_diff: f64 },

    #[error("enumeration refused: {count} supports exceed the limit of {limit}")]
    TooManySupports { count: u128, limit: u128 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
