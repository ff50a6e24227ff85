use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: cannot parse {value:?} as a real number")]
    Parse { row: usize, value: String },

    #[error("column {0} not found")]
    MissingColumn(String),

    #[error("empty series")]
    Empty,

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("zero-variance series")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible model: {0}")]
    Infeasible(String),

    #[error("residual map failed at index {index}: {reason}")]
    ResidualMap { index: usize, reason: String },

    #[error("transform {transform} produced a non-finite value at index {index}")]
    Transform { transform: String, index: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("too many failed replications: {failed} of {total}")]
    Replications { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
