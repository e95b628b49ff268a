use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lattice with {paths} paths exceeds the path budget of {budget}")]
    SizeExceeded { paths: u128, budget: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("measure is not equivalent to the base measure: zero denominator on block {block} at time index {k}")]
    EquivalenceViolation { k: usize, block: usize },

    #[error("process is not adapted: time index {k}, block {block} (paths {first_path} and {other_path} differ)")]
    NotAdapted {
        k: usize,
        block: usize,
        first_path: String,
        other_path: String,
    },

    #[error("no martingale measure at time index {k}, block {block}: value {value} not strictly between {down} and {up}")]
    NoMartingaleMeasure {
        k: usize,
        block: usize,
        value: f64,
        down: f64,
        up: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported constraint: {0}")]
    UnsupportedConstraint(String),

    #[error("no feasible point: {0}")]
    Infeasible(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
