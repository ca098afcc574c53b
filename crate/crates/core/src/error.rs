//! Error type shared across the library.

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum DerevError {
    /// WAV container uses an encoding we do not handle.
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    /// The file does not parse as a WAV container at all.
    #[error("corrupt or truncated audio header: {0}")]
    CorruptHeader(String),

    /// Underlying I/O failure while reading or writing a file.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    /// A decoded or computed sample was NaN or infinite.
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },

    /// Input sample rate does not match what the pipeline was configured for.
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },

    /// The signal is shorter than a single analysis frame.
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    /// Matrix shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A filter row lost all of its energy in the first tap, so the
    /// per-row rescaling has no well-defined scale factor.
    #[error("degenerate filter: first-tap energy vanished in row {row}")]
    DegenerateFirstColumn { row: usize },

    /// Requested factorization rank is unusable.
    #[error("invalid rank {rank}: {reason}")]
    InvalidRank { rank: usize, reason: String },

    /// A dictionary trainer was handed no data.
    #[error("empty training set")]
    EmptyTrainingSet,

    /// Not enough usable frames to sample the requested dictionary.
    #[error("insufficient frames: need {need}, have {have} usable")]
    InsufficientFrames { need: usize, have: usize },

    /// Lambert W is only defined here for non-negative arguments.
    #[error("negative argument {0} passed to the principal Lambert W branch")]
    NegativeArgument(f64),

    /// The cost blend weight must lie strictly inside (0, 1).
    #[error("invalid blend weight rho = {0}; must satisfy 0 < rho < 1")]
    InvalidWeight(f64),

    /// Stacking window must be at least one frame.
    #[error("invalid stacking window: {0}")]
    InvalidWindow(String),

    /// A synthesis or engine specification is self-contradictory.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Two signals that must be compared sample-for-sample differ in
    /// length or sample rate.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, DerevError>;
