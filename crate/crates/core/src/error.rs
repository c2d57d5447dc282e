//! Error type shared by every module in the crate.

use std::path::PathBuf;

use crate::corpus::Label;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("file vanished or became unreadable between passes: {path}")]
    FileVanished { path: PathBuf },

    #[error("{path} changed on disk: recorded {expected} bytes, found {actual}")]
    FileChanged {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}:{row}: malformed manifest row: {message}")]
    ManifestRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },

    #[error("unknown sample id {id:?}")]
    UnknownSampleId { id: String },

    #[error("no label recorded for sample {id:?}")]
    MissingLabel { id: String },

    #[error("sample {id:?} is empty; zero-length inputs have no compression distance")]
    EmptySample { id: String },

    #[error("{what} must be non-empty")]
    EmptyInput { what: &'static str },

    #[error("{what} must be even, got {value}")]
    OddCount { what: &'static str, value: usize },

    #[error("need {needed} {label} samples, corpus holds {available}")]
    InsufficientPopulation {
        label: Label,
        needed: usize,
        available: usize,
    },

    #[error(
        "input of {len} bytes exceeds dictionary_bytes = {dictionary_bytes}; \
         raise dictionary_bytes so the whole input fits in one window"
    )]
    InputExceedsDictionary { len: u64, dictionary_bytes: u64 },

    #[error(
        "concatenation of {id_a:?} and {id_b:?} is {combined} bytes, which exceeds \
         dictionary_bytes = {dictionary_bytes}; raise dictionary_bytes so pairs fit in one window"
    )]
    PairExceedsDictionary {
        id_a: String,
        id_b: String,
        combined: u64,
        dictionary_bytes: u64,
    },

    #[error("compressed sizes must be positive to form a bound")]
    NonPositiveSize,

    #[error("invalid configuration: {message}")]
    InvalidConfig { message: String },

    #[error("invalid argument: {message}")]
    InvalidArgument { message: String },

    #[error("feature vector has {actual} values, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("left and right child counts do not sum to the parent: {message}")]
    PartitionMismatch { message: String },

    #[error("scores contain only one class; a ROC curve needs both")]
    SingleClass,

    #[error("compression failed: {message}")]
    Compression { message: String },

    #[error("cache file {path} is not in the expected format: {message}")]
    CacheFormat { path: PathBuf, message: String },

    #[error("matrix file malformed: {message}")]
    MatrixFormat { message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Shorthand for wrapping an io error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
