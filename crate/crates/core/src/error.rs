use thiserror::Error;

use crate::dictionary::NeuralDictionary;
use crate::reskoopnet::TrainReport;

pub type Result<T> = std::result::Result<T, KoopmanError>;

/// Training state captured just before a numeric failure.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub dictionary: NeuralDictionary,
    pub report: TrainReport,
}

#[derive(Debug, Error)]
pub enum KoopmanError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "regularization required: G is numerically singular \
         (min eigenvalue {min_eigenvalue:e}, norm {norm:e}); pass sigma > 0"
    )]
    RegularizationRequired { min_eigenvalue: f64, norm: f64 },

    #[error("eigenfunction numerically null (v^H G v = {0:e})")]
    NullEigenfunction(f64),

    #[error("cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("svd failed: {0}")]
    Svd(String),

    #[error("trajectory of length {len} is too short for delay {delay}")]
    TrajectoryTooShort { len: usize, delay: usize },

    #[error("clusters {first} and {second} have coincident centroids")]
    CoincidentCentroids { first: i64, second: i64 },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        last_good: Box<Checkpoint>,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KoopmanError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        KoopmanError::DimensionMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        KoopmanError::InvalidParameter(msg.into())
    }
}
