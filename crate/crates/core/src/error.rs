use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("text contains no tokens{}", context_suffix(.0))]
    EmptyText(Option<String>),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("labels express no preference (all equal)")]
    NoPreference,

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("duplicate doc_id `{0}`")]
    DuplicateDoc(String),

    #[error("duplicate query_id `{0}`")]
    DuplicateQuery(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("corrupt index: {0}")]
    CorruptIndex(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid id `{0}`: ids must be non-empty and contain no whitespace")]
    InvalidId(String),

    #[error("score for query `{query_id}`, doc `{doc_id}` is NaN")]
    InvalidScore { query_id: String, doc_id: String },

    #[error("invalid training sample: {0}")]
    InvalidSample(String),

    #[error("missing text for id `{0}`")]
    MissingText(String),

    #[error("not enough documents to sample {needed}-tuples for any query")]
    InsufficientDocs { needed: usize },

    #[error("metric cutoff must be positive")]
    BadCutoff,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration conflict: {0}")]
    ConfigConflict(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn context_suffix(ctx: &Option<String>) -> String {
    match ctx {
        Some(id) => format!(" (id `{id}`)"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::EmptyText(_) => "empty_text",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::NoPreference => "no_preference",
            Error::Diverged { .. } => "diverged",
            Error::DuplicateDoc(_) => "duplicate_doc",
            Error::DuplicateQuery(_) => "duplicate_query",
            Error::EmptyCorpus => "empty_corpus",
            Error::CorruptIndex(_) => "corrupt_index",
            Error::CorruptModel(_) => "corrupt_model",
            Error::Parse { .. } => "parse",
            Error::InvalidId(_) => "invalid_id",
            Error::InvalidScore { .. } => "invalid_score",
            Error::InvalidSample(_) => "invalid_sample",
            Error::MissingText(_) => "missing_text",
            Error::InsufficientDocs { .. } => "insufficient_docs",
            Error::BadCutoff => "bad_cutoff",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ConfigConflict(_) => "config_conflict",
            Error::Io { .. } => "io",
        }
    }
}
