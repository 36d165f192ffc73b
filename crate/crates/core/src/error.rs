use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("dimensions {width}x{height} exceed addressable size")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid dimensions {width}x{height}: both must be at least 1")]
    EmptyDimensions { width: usize, height: usize },
    #[error("sample count {actual} does not match {width}x{height}")]
    SampleCount { width: usize, height: usize, actual: usize },
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("sample {value} at index {index} cannot be stored as a 16-bit integer")]
    RangeError { index: usize, value: f32 },
    #[error("label {label} does not fit in a 16-bit PNG")]
    LabelOverflow { label: u32 },
    #[error("z-stack has no planes")]
    EmptyStack,
    #[error("marker exceeds mask at index {index}")]
    MarkerExceedsMask { index: usize },
    #[error("h must be a finite non-negative value, got {0}")]
    NegativeH(f64),
    #[error("seed label {label} at index {index} lies outside the mask")]
    SeedOutsideMask { index: usize, label: u32 },
    #[error("image is constant; correlation is undefined")]
    ConstantImage,
    #[error("IoU threshold {0} is below 0.5; matching is not one-to-one there")]
    ThresholdTooLow(f64),
    #[error("no records to summarize")]
    EmptyInput,
    #[error("crop size {size} does not fit a {width}x{height} image")]
    CropTooLarge { size: usize, width: usize, height: usize },
    #[error("bad count: {0}")]
    BadCount(String),
    #[error("could only place {placed} of {requested} cells")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("serialization: {0}")]
    Serialize(String),
}

impl From<png::DecodingError> for Error {
    fn from(err: png::DecodingError) -> Self {
        match err {
            png::DecodingError::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Error::CorruptFile(format!("truncated PNG: {e}"))
            }
            png::DecodingError::IoError(e) => Error::Io(e),
            png::DecodingError::LimitsExceeded => Error::CorruptFile("PNG exceeds decoder limits".into()),
            other => Error::CorruptFile(other.to_string()),
        }
    }
}

impl From<png::EncodingError> for Error {
    fn from(err: png::EncodingError) -> Self {
        match err {
            png::EncodingError::IoError(e) => Error::Io(e),
            other => Error::Serialize(other.to_string()),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Serialize(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Serialize(err.to_string())
    }
}
