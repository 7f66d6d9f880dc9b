use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward requires a scalar loss, got shape {0}")]
    NotScalar(Shape),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, value: f64 },

    #[error("checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("checkpoint: unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint: truncated while reading {0}")]
    Truncated(&'static str),

    #[error("checkpoint: parameter `{name}` has shape {found}, expected {expected}")]
    CheckpointShape {
        name: String,
        found: Shape,
        expected: Shape,
    },

    #[error("checkpoint: {0}")]
    CheckpointLayout(String),

    #[error("config file line {line}: {msg}")]
    ConfigFile { line: usize, msg: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{}: {source}", path.display())]
    Png {
        path: PathBuf,
        #[source]
        source: PngError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum PngError {
    #[error("decode failed: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("encode failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("unsupported pixel format {color:?} at depth {depth:?} (only 8-bit RGB is accepted)")]
    Unsupported {
        color: png::ColorType,
        depth: png::BitDepth,
    },
}

pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Error {
    Error::InvalidArgument {
        op,
        msg: msg.into(),
    }
}
