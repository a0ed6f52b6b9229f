use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op} requires even spatial dimensions, got {height}x{width}")]
    OddDimension {
        op: &'static str,
        height: usize,
        width: usize,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("variable belongs to tape {var_tape}, not the active tape {tape}")]
    StaleTape { var_tape: u64, tape: u64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("label {0} is outside [0, 1]")]
    InvalidLabel(f64),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("a segmented network needs at least 2 segments, got {0}")]
    TooFewSegments(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint does not match network spec: {0}")]
    CheckpointMismatch(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
