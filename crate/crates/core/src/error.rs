use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LscError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LscError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {0} has no training documents")]
    EmptyClass(crate::corpus::Polarity),

    #[error("word {0:?} is not in the model vocabulary")]
    UnknownWord(String),

    #[error("task {0:?} is already part of the knowledge base")]
    DuplicateTask(String),

    #[error("unknown domain {0:?}")]
    UnknownDomain(String),

    #[error("non-finite gradient for word {word:?} in document {doc_id:?}")]
    NonFinite { word: String, doc_id: String },

    #[error("sgd diverged after {} epochs; objective trace: {trace:?}", trace.len().saturating_sub(1))]
    Diverged { trace: Vec<f64> },

    #[error("{domain} fold {fold}: {source}")]
    InFold {
        domain: String,
        fold: usize,
        #[source]
        source: Box<LscError>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl LscError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LscError::Io {
            path: path.into(),
            source,
        }
    }
}
