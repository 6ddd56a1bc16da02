use thiserror::Error;

use crate::signal::Direction;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("timestamps for {direction} are not strictly increasing (line {line})")]
    NonMonotonicTimestamps { direction: Direction, line: usize },

    #[error("required analysis channel {0} is missing")]
    MissingRequiredChannel(Direction),

    #[error("median sampling rate {rate:.2} Hz for {direction} is outside [20, 30] Hz")]
    RateOutOfRange { direction: Direction, rate: f64 },

    #[error("session contains no usable slice")]
    EmptySession,

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("slice too short for a periodogram: {0} samples (need >= 64)")]
    SliceTooShort(usize),

    #[error("no spectral power in the fundamental search band")]
    NoFundamental,

    #[error("factorization failed at row {0}: non-positive pivot")]
    FactorizationFailure(usize),

    #[error("invalid GP input: {0}")]
    InvalidGpInput(String),

    #[error("no periodogram peaks to initialize the oscillator model")]
    NoPeaks,

    #[error("degenerate chain: post-warmup acceptance {0:.3} < 0.05")]
    DegenerateChain(f64),

    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("paired inputs differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("untestable: no usable pairs")]
    Untestable,

    #[error("matrix lacks condition {0} at the requested scope")]
    MissingCondition(String),

    #[error("covariance matrix is degenerate (rank 0)")]
    DegenerateCovariance,

    #[error("training diverged: non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("invalid configuration key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error JSON and FFI error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::NonMonotonicTimestamps { .. } => "NonMonotonicTimestamps",
            Error::MissingRequiredChannel(_) => "MissingRequiredChannel",
            Error::RateOutOfRange { .. } => "RateOutOfRange",
            Error::EmptySession => "EmptySession",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::SliceTooShort(_) => "SliceTooShort",
            Error::NoFundamental => "NoFundamental",
            Error::FactorizationFailure(_) => "FactorizationFailure",
            Error::InvalidGpInput(_) => "InvalidGpInput",
            Error::NoPeaks => "NoPeaks",
            Error::DegenerateChain(_) => "DegenerateChain",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Untestable => "Untestable",
            Error::MissingCondition(_) => "MissingCondition",
            Error::DegenerateCovariance => "DegenerateCovariance",
            Error::NonFiniteLoss(_) => "NonFiniteLoss",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::Config { .. } => "ConfigError",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
