use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// A point or argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("source model error: {0}")]
    Source(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// Conjugate gradients met `p^T K p <= 0` or `r^T M^-1 r <= 0`.
    #[error("conjugate gradients broke down after {iterations} iterations: the {operator} is not positive definite")]
    Indefinite { iterations: usize, operator: &'static str },

    #[error("incompatible load: sum {sum:e} exceeds tolerance relative to l1 norm {l1:e}")]
    IncompatibleLoad { sum: f64, l1: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("transfer matrix row for electrode {electrode}: {source}")]
    Electrode {
        electrode: usize,
        #[source]
        source: Box<Error>,
    },

    /// Failure of one stage of the forward pipeline.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("analytic series: {0}")]
    Series(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
