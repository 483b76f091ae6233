use std::path::PathBuf;

use thiserror::Error;

use crate::internet::FeatureId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "SIR sub-step in interval {interval} drove a compartment negative; \
         reduce beta/gamma or increase the number of sub-steps"
    )]
    NegativeCompartment { interval: usize },

    #[error("normal matrix is singular; refit with a ridge penalty lambda > 0")]
    SingularMatrix,

    #[error("feature {0} required by the model is missing from the input")]
    MissingFeature(FeatureId),

    #[error("Poisson mean {mean} for feature {feature} at interval {interval} exceeds 2^52")]
    PoissonOverflow {
        feature: FeatureId,
        interval: usize,
        mean: f64,
    },

    #[error("training data has a missing value at interval {0}")]
    MissingTrainingValue(usize),

    #[error("{}: row {row}: {message}", path.display())]
    Ingest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by user-supplied configuration or input rather than a
    /// runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Config(_) | Error::Ingest { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
