use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate claim id {id:?} on line {line} (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },

    #[error("line {line}: unknown claim id {id:?}")]
    UnknownId { id: String, line: usize },

    #[error("line {line}: self-pair on claim {id:?}")]
    SelfPair { id: String, line: usize },

    #[error("conflicting labels for pair ({a:?}, {b:?}) on lines {first_line} and {line}")]
    ConflictingPair {
        a: String,
        b: String,
        first_line: usize,
        line: usize,
    },

    #[error("bad file header: {0}")]
    BadHeader(String),

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("id set mismatch between embeddings and corpus ({count} offending ids): {}", .sample.join(", "))]
    IdMismatch { count: usize, sample: Vec<String> },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("zero-norm vector for {0:?}")]
    ZeroNorm(String),

    #[error("row {row} ({id:?}) is not unit-normalized (norm {norm})")]
    NotNormalized { row: usize, id: String, norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("condensed matrix of {bytes} bytes exceeds the memory cap of {cap} bytes")]
    MemoryCap { bytes: u64, cap: u64 },

    #[error("no valid clustering: every candidate cut is degenerate")]
    NoValidClustering,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input data or arguments, as opposed to
    /// environment failures such as I/O.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
