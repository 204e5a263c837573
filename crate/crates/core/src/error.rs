use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped loosely by the stage that raises them so callers
/// (the CLI in particular) can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("header: missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("header: key `{key}` has invalid value `{value}`")]
    InvalidValue { key: String, value: String },
    #[error("header: unsupported data type code {0}")]
    UnsupportedDataType(u32),
    #[error("header: malformed brace list for key `{0}`")]
    MalformedList(String),

    #[error("raster size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("window {window} lies outside {lines}x{samples} extent")]
    OutOfBounds {
        window: String,
        lines: usize,
        samples: usize,
    },
    #[error("mask: invalid label {value} at line {line}, sample {sample}")]
    InvalidLabel { value: u8, line: usize, sample: usize },
    #[error("mask must be single-band byte data, got {bands} band(s) of type {data_type}")]
    NotAMask { bands: usize, data_type: u32 },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("invalid split boundary {boundary} for region with {samples} samples")]
    InvalidSplit { boundary: usize, samples: usize },

    #[error("insufficient samples: {samples} pixels for {bands} bands")]
    InsufficientSamples { samples: usize, bands: usize },
    #[error("non-finite value {what}")]
    NonFinite { what: String },
    #[error("matrix is not positive definite after ridge {ridge:e}")]
    NotPositiveDefinite { ridge: f64 },
    #[error("degenerate target: {0}")]
    DegenerateTarget(&'static str),
    #[error("non-finite score at line {line}, sample {sample}")]
    NonFiniteScore { line: usize, sample: usize },

    #[error("training data has no {0} pixels")]
    MissingClass(&'static str),
    #[error("training loss became non-finite at epoch {0}")]
    DivergedAt(usize),
    #[error("model: {0}")]
    Model(String),

    #[error("metrics need at least one positive and one negative (P={positives}, N={negatives})")]
    NeedBothClasses { positives: usize, negatives: usize },
    #[error("empty grid")]
    EmptyGrid,

    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(key: &str, value: impl Into<String>) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            value: value.into(),
        }
    }

    /// True for errors caused by bad inputs rather than runtime conditions.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::DivergedAt(_) | Error::NotPositiveDefinite { .. })
    }
}
