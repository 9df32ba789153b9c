use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate chunk id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector{}", fmt_id(.id))]
    ZeroNorm { id: Option<String> },

    #[error("non-finite value for chunk `{id}`")]
    NonFinite { id: String },

    #[error("relevance labels missing on {unlabeled} chunk(s)")]
    MissingLabels { unlabeled: usize },

    #[error("corpus has no chunk labeled relevant")]
    NoRelevantChunks,

    #[error("unknown chunk id `{0}`")]
    UnknownId(String),

    #[error("invalid strategy `{spec}`: {reason}")]
    Strategy { spec: String, reason: String },

    #[error("cache {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("embedding backend failed for {} text(s) [{}]: {message}", .ids.len(), .ids.join(", "))]
    Backend { ids: Vec<String>, message: String },

    #[error("answerability oracle failed for query `{query_id}`: {message}")]
    Oracle { query_id: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_id(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" for `{id}`"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Backend failures are transient from the caller's point of view.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Backend { .. })
    }

    /// Process exit code: 2 for configuration/validation problems, 3 for
    /// backend and IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend { .. } | Error::Io { .. } | Error::Oracle { .. } => 3,
            Error::Cache { .. } => 3,
            _ => 2,
        }
    }
}
