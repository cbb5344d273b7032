//! Error type shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// File does not start with the expected magic bytes.
    #[error("bad magic at byte offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    /// File declares a format version this build does not understand.
    #[error("unsupported format version {found} at byte offset {offset}")]
    UnsupportedVersion { found: u32, offset: u64 },

    /// Payload ends before the header-declared length.
    #[error("truncated file at byte offset {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        offset: u64,
        needed: u64,
        available: u64,
    },

    /// File is longer than the header-declared payload.
    #[error("trailing garbage: {extra} unexpected bytes starting at byte offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },

    /// A NaN or infinity where a finite value is required.
    #[error("non-finite value {value} at byte offset {offset} (element index {index})")]
    NonFinite {
        offset: u64,
        index: usize,
        value: f64,
    },

    /// A negative value where nonnegative radiance is required.
    #[error("negative value {value} at byte offset {offset} (element index {index})")]
    NegativeValue {
        offset: u64,
        index: usize,
        value: f64,
    },

    /// Malformed text input (labels CSV, pattern CSV, sidecar JSON).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A precondition or type invariant does not hold.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A column of the self-expressiveness data matrix has zero norm.
    #[error("column {index} of the data matrix has zero norm")]
    ZeroColumn { index: usize },

    /// Problem size exceeds the dense-representation cap.
    #[error("problem size {size} exceeds the dense cap of {cap}")]
    TooLarge { size: usize, cap: usize },

    /// Bounded rejection resampling did not produce a valid draw.
    #[error("exceeded {limit} resampling retries while {what}")]
    RetriesExhausted { what: String, limit: usize },

    /// An eigendecomposition failed to converge.
    #[error("eigensolver did not converge for a {size}x{size} matrix")]
    EigenFailure { size: usize },

    /// A pipeline stage failed; the stage name identifies where.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing metrics: {0}")]
    MissingMetrics(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than I/O or numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io(_) => false,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Json(_) => true,
            _ => true,
        }
    }
}
