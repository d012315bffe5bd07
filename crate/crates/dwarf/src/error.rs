use thiserror::Error;

/// Crate-wide error type. Every fallible public operation returns this.
#[derive(Debug, Error)]
pub enum DwarfError {
    /// Tensor operands do not fit together (dimensions, channel counts, batch sizes).
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An argument is structurally valid but outside the accepted domain.
    #[error("{0}")]
    InvalidArgument(String),

    /// A byte stream could not be decoded; `offset` points at the failing byte.
    #[error("codec error at byte {offset}: {message}")]
    Codec { offset: usize, message: String },

    /// A value cannot be represented in the requested file format.
    #[error("encode error: {0}")]
    Encode(String),

    /// Manifest parse or resolution failure, with the 1-based line number.
    #[error("manifest {path}:{line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },

    /// Checkpoint file is malformed or does not match the model.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, DwarfError>;

impl DwarfError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        DwarfError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        DwarfError::InvalidArgument(msg.into())
    }
}
