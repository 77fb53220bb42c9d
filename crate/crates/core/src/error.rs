use thiserror::Error;

/// Errors raised by the optimizer, its models and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("point {x:?} lies outside the domain")]
    OutsideDomain { x: Vec<f64> },

    #[error("too few candidates ({available}) to select a batch of {requested}")]
    TooFewCandidates { available: usize, requested: usize },

    #[error("reference L2 norm of the true mean is zero")]
    DegenerateNorm,

    #[error("unknown benchmark `{name}`; valid names: {valid}")]
    UnknownBenchmark { name: String, valid: String },

    #[error("evaluator returned non-finite value {value} at {x:?}")]
    NonFiniteValue { x: Vec<f64>, value: f64 },

    #[error("evaluator returned {got} values for a batch of {expected}")]
    BatchSizeMismatch { expected: usize, got: usize },

    #[error("evaluation failed at {x:?}: {message}")]
    Evaluation { x: Vec<f64>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures originating in the objective or its evaluator
    /// rather than in configuration or I/O.
    pub fn is_evaluator_failure(&self) -> bool {
        matches!(self, Error::NonFiniteValue { .. } | Error::BatchSizeMismatch { .. } | Error::Evaluation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
