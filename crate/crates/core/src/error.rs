use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("feature index {index} out of range for {n_features} features")]
    FeatureIndex { index: usize, n_features: usize },

    #[error("gene address {address} out of range (limit {limit})")]
    Address { address: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Csv { row: usize, column: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("degenerate split: training set has {0} distinct class(es)")]
    DegenerateSplit(usize),

    #[error("no complete trials")]
    NoCompleteTrials,

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
