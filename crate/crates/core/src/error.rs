use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("logging policy lacks full support: pi_0(a={action}|x) = {prob}")]
    FullSupport { action: usize, prob: f64 },

    #[error("invalid observation propensity {prob} at row {row}")]
    InvalidPropensity { row: usize, prob: f64 },

    #[error("target reward missing at row {0}; estimator requires full observation")]
    MissingReward(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("training diverged at iteration {iteration}: non-finite gradient")]
    TrainingDiverged { iteration: usize },

    #[error("tuning failed at gamma={gamma}, replicate {replicate}: {source}")]
    Tuning {
        gamma: f64,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("instance too large to enumerate: {size} > {limit}")]
    EnumerationLimit { size: usize, limit: usize },

    #[error("degenerate environment: optimal and uniform values coincide ({0})")]
    DegenerateEnvironment(f64),

    #[error("ingestion error in {file} at row {row}: {message}")]
    Ingestion {
        file: String,
        row: usize,
        message: String,
    },

    #[error("interaction matrix has no entry for user {user}, item {item}")]
    MissingCell { user: String, item: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
