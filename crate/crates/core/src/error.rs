use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel `{kernel}` cannot evaluate {found} points")]
    DomainMismatch { kernel: String, found: &'static str },

    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cosine kernel is undefined for a zero vector")]
    ZeroNorm,

    #[error("non-PSD kernel on this pair ({x}, {y}): squared distance {radicand}")]
    NonPsd { x: usize, y: usize, radicand: f64 },

    #[error("non-PSD kernel: K(q, q) = {0} is negative")]
    NegativeSelfKernel(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("k exceeds n (k = {k}, n = {n})")]
    KExceedsN { k: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse {what} `{input}`: {reason}")]
    Parse { what: &'static str, input: String, reason: String },

    #[error("self-kernel cache missing or built for a different kernel")]
    MissingSelfKernels,

    #[error("{path}: row {row}: {message}")]
    Ingest { path: PathBuf, row: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("index does not match dataset: {0}")]
    IndexMismatch(String),

    #[error("n = {n} exceeds the exhaustive-diagnostic cap of {cap}; use sampling or raise the cap")]
    CapExceeded { n: usize, cap: usize },

    #[error("{context}: {source}")]
    Io { context: String, #[source] source: std::io::Error },

    #[error("malformed index file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn parse(what: &'static str, input: &str, reason: impl Into<String>) -> Self {
        Error::Parse { what, input: input.to_string(), reason: reason.into() }
    }

    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DomainMismatch { .. } => "domain_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ZeroNorm => "zero_norm",
            Error::NonPsd { .. } | Error::NegativeSelfKernel(_) => "non_psd",
            Error::EmptyDataset => "empty_dataset",
            Error::KExceedsN { .. } => "k_exceeds_n",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse { .. } => "parse",
            Error::MissingSelfKernels => "missing_self_kernels",
            Error::Ingest { .. } | Error::Format { .. } => "ingest",
            Error::IndexMismatch(_) | Error::Json(_) => "index_mismatch",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::Io { .. } => "io",
        }
    }
}
