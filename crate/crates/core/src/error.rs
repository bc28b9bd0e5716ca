use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("image has zero width or height")]
    ZeroDimension,
    #[error("plane data length {len} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("non-finite intensity at index {0}")]
    NonFinite(usize),
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("image of {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("unsupported bit depth {0} (expected 8 or 16)")]
    Depth(u8),
}

pub type Result<T> = std::result::Result<T, Error>;
