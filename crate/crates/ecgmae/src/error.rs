//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // WFDB parsing
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported signal format {0} (supported: 212, 16)")]
    UnsupportedFormat(u32),
    #[error("signal data truncated: need {needed} bytes, have {have}")]
    TruncatedData { needed: usize, have: usize },
    #[error("invalid gain {0} (must be > 0)")]
    InvalidGain(f64),
    #[error("malformed annotation stream: {0}")]
    MalformedAnnotation(String),
    #[error("decoded sample count {decoded} does not match header count {expected}")]
    LengthMismatch { expected: usize, decoded: usize },

    // Preprocessing
    #[error("empty signal")]
    EmptySignal,
    #[error("signal too short for peak detection: {len} samples at {fs} Hz")]
    SignalTooShort { len: usize, fs: f64 },
    #[error("non-finite input sample")]
    NonFiniteInput,
    #[error("MITDB record {0} is not in the DS1/DS2 protocol lists")]
    UnknownRecord(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // Numeric substrate and model
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("target rows must sum to 1 (row {row} sums to {sum})")]
    InvalidTarget { row: usize, sum: f64 },
    #[error("mask selects no samples")]
    EmptyMask,
    #[error("mixup lambda {0} outside [0, 1]")]
    InvalidLambda(f64),

    // Training and checkpoints
    #[error("empty dataset")]
    EmptyDataset,
    #[error("encoder must be frozen for fine-tuning (pass supervised=true to train it)")]
    UnfrozenEncoder,
    #[error("unlabeled segment at index {0} in a labeled operation")]
    UnlabeledSegment(usize),
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-parsable kind tag, used by the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::TruncatedData { .. } => "TruncatedData",
            Error::InvalidGain(_) => "InvalidGain",
            Error::MalformedAnnotation(_) => "MalformedAnnotation",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptySignal => "EmptySignal",
            Error::SignalTooShort { .. } => "SignalTooShort",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::UnknownRecord(_) => "UnknownRecord",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidTarget { .. } => "InvalidTarget",
            Error::EmptyMask => "EmptyMask",
            Error::InvalidLambda(_) => "InvalidLambda",
            Error::EmptyDataset => "EmptyDataset",
            Error::UnfrozenEncoder => "UnfrozenEncoder",
            Error::UnlabeledSegment(_) => "UnlabeledSegment",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptFile(_) => "CorruptFile",
            Error::Io(_) => "Io",
        }
    }
}
