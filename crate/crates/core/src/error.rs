use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    RawIo(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{what}, line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("type hierarchy contains a cycle through {0}")]
    HierarchyCycle(String),
    #[error("alias table is empty after cleaning and type mapping ({0})")]
    EmptyAliasTable(String),
    #[error("cannot fit vectorizer on an empty alias list")]
    EmptyVocabulary,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("document {doc_id} has overlapping mentions at sentence {sentence}")]
    OverlappingMentions { doc_id: String, sentence: usize },
    #[error("no usable training data: {0}")]
    NoTrainingData(String),
    #[error("unsupported or corrupt {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error("gradient check failed on tensor {tensor}: relative error {error:.3e}")]
    GradCheck { tensor: String, error: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }
}
