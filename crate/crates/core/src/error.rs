use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("category index {index} out of range for site `{site}` (cardinality {cardinality})")]
    IndexOutOfRange {
        site: String,
        index: usize,
        cardinality: usize,
    },

    #[error("invalid design space: {0}")]
    InvalidSpace(String),

    #[error("point {0} is already in the dataset")]
    DuplicatePoint(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("all target values are identical; R² is undefined")]
    DegenerateTarget,

    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),

    #[error("exhaustive search over {n_vars} variables exceeds the limit of {max}")]
    TooLarge { n_vars: usize, max: usize },

    #[error("invalid annealing schedule: {0}")]
    InvalidSchedule(String),

    #[error("requested {requested} new points but only {available} unexplored feasible points remain")]
    SpaceExhausted { requested: usize, available: u64 },

    #[error("no table entry for point {0}")]
    MissingEntry(String),

    #[error("evaluation budget of {cap} exhausted")]
    BudgetExceeded { cap: u64 },

    #[error("density must lie in [0, 1], got {0}")]
    InvalidDensity(f64),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("config error in `{field}`: {message}")]
    ConfigParse { field: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("external solver failed: {0}")]
    ExternalSolver(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
