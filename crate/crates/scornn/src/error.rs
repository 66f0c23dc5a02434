use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("matrix is singular to working precision (zero pivot at column {col})")]
    Singular { col: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite gradient in parameter group '{group}' at step {step}")]
    NonFiniteGradient { group: String, step: u64 },

    #[error("class index {index} out of range (num classes {classes})")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadIdxMagic {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated or malformed file: {details}")]
    MalformedFile { path: String, details: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("training aborted: non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            details: details.into(),
        }
    }
}
