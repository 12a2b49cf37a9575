use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset `{0}` requires a beta exponent")]
    MissingExponent(&'static str),
    #[error("duplicate input value {0} in 1-d dataset")]
    DuplicateInput(f64),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("bad IDX magic number in {path}: expected {expected}, found {found}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("IDX file {path} is truncated: {detail}")]
    Truncated { path: PathBuf, detail: String },
    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("zero-norm {0}")]
    ZeroNorm(&'static str),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("value at index {index} must be positive, got {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
