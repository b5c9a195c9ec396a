use std::path::PathBuf;

use thiserror::Error;

use crate::vol3::Dims3;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(Dims3, Dims3),

    #[error("invalid HU window: lo {lo} must be below hi {hi}")]
    InvalidWindow { lo: f32, hi: f32 },

    #[error("volume is already windowed")]
    AlreadyWindowed,

    #[error("operation requires a windowed volume")]
    NotWindowed,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("dims overflow or zero-voxel dims: {0}x{1}x{2}")]
    DimsOverflow(u32, u32, u32),

    #[error("unsupported file field: {0}")]
    UnsupportedFormat(String),

    #[error("checksum mismatch")]
    ChecksumMismatch,

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
