use thiserror::Error;

/// Errors produced by table validation, metric computation, and training.
#[derive(Error, Debug)]
pub enum Error {
    #[error("malformed input: sample `{id}` has {got} class scores, expected {expected}")]
    ScoreLengthMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("malformed input: sample `{id}` contains a non-finite score")]
    NonFiniteScore { id: String },
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no close-set samples in table")]
    NoCloseSamples,
    #[error("no open-set samples in table")]
    NoOpenSamples,
    #[error("class index {index} out of range for {num_classes} known classes plus open")]
    ClassIndexOutOfRange { index: usize, num_classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("undefined bound: open-set false positive rate must be nonzero")]
    UndefinedBound,
    #[error("training diverged: {0}")]
    Divergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
