use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("weight row sums to {sum}, expected 1")]
    RowNotNormalized { sum: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("parent {0} is not registered with the group map")]
    UnknownParent(usize),

    #[error("unknown atomic task type {0}")]
    UnknownTaskType(usize),

    #[error("unknown resource {0}")]
    UnknownResource(usize),

    #[error("no child agents available for allocation")]
    NoChildren,

    #[error("invalid learner config: {0}")]
    LearnerConfig(String),

    #[error("invalid scenario config: {0}")]
    ScenarioConfig(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("feedback for composite {composite} sums to {atv_sum}, taq is {taq}")]
    FeedbackConservation {
        composite: usize,
        atv_sum: f64,
        taq: f64,
    },

    #[error("comparison needs matching seed sets: {0}")]
    SeedMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
