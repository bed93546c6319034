//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { path: PathBuf, offset: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("span ({start},{end}) out of range for corpus of {len} characters")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("span ({start},{end}) crosses a document boundary")]
    SpanCrossesBoundary { start: usize, end: usize },

    /// A caller-supplied argument or configuration is inconsistent.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A file failed to parse as the expected format.
    #[error("bad file format: {0}")]
    Format(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("degenerate ranking: {0}")]
    DegenerateRanking(String),

    #[error("query has no in-vocabulary sub-n-grams")]
    UncomposableQuery,

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),
}
