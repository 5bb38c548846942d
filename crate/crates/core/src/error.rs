use std::path::PathBuf;

use crate::domain::{EventKind, Phase};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("strength is not a number")]
    InvalidStrength,

    #[error("candidate set must be non-empty, finite and strictly ascending")]
    InvalidCandidateSet,

    #[error("illegal transition: {event:?} in phase {from:?}")]
    IllegalTransition { from: Phase, event: EventKind },

    #[error("text is empty after trimming")]
    EmptyText,

    #[error("embedding cache miss for key {0:?}")]
    CacheMiss(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid provider config: {0}")]
    InvalidConfig(String),

    #[error("image carries no semantic vector")]
    MissingSemanticVector,

    #[error("no cached score for image {image} and prompt {prompt:?}")]
    MissingScore { image: String, prompt: String },

    #[error("weight file format version mismatch or unreadable header: {0}")]
    FormatVersionMismatch(String),

    #[error("weight shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("weight payload checksum mismatch")]
    ChecksumMismatch,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergenceDetected { epoch: usize },

    #[error("schedule infeasible: {steps} steps but only {available} levels from t_start")]
    InfeasibleSchedule { steps: usize, available: usize },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("backend protocol error: {0}")]
    ProtocolError(String),

    #[error("backend request timed out")]
    Timeout,

    #[error("backend failure: {0}")]
    BackendFailure(String),

    #[error("negative latency component: {0}")]
    NegativeComponent(&'static str),

    #[error("scenario {0:?} has no completed sessions")]
    EmptyScenario(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("image encoding: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    /// True for failures that originate in a generation backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::BackendUnavailable(_)
                | Error::ProtocolError(_)
                | Error::Timeout
                | Error::BackendFailure(_)
        )
    }
}
