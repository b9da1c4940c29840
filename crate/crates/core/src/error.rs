use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown outcome `{0}`")]
    UnknownOutcome(String),
    #[error("category `{category}` is not part of outcome `{outcome}`")]
    UnknownCategory { outcome: String, category: String },
    #[error("duplicate report id `{0}`")]
    DuplicateId(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("word `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRecord { .. }
                | Error::UnknownOutcome(_)
                | Error::UnknownCategory { .. }
                | Error::DuplicateId(_)
                | Error::InvalidConfig(_)
                | Error::InsufficientData(_)
                | Error::OutOfVocabulary(_)
                | Error::Json(_)
        )
    }
}
