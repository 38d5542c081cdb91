use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite: pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("invalid burn-in schedule: {0}")]
    InvalidSchedule(String),

    #[error("empty suffix: burn-in {burn_in} leaves no records out of {total}")]
    EmptySuffix { burn_in: usize, total: usize },

    #[error("vector norm is zero")]
    ZeroVector,

    #[error("massart noise level must lie in [0, 1/2), got {0}")]
    InvalidEta(String),

    #[error("bin {bin} has only {test_samples} test samples (need at least {required})")]
    BinTooSmall {
        bin: usize,
        test_samples: usize,
        required: usize,
    },

    #[error("invalid window [{start}, {end}) for a log of length {len}")]
    InvalidWindow {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("invalid context set: {0}")]
    InvalidContext(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
