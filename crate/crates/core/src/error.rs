use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("ballot is truncated (ranks {ranked} of {candidates} candidates)")]
    TruncatedBallot { ranked: usize, candidates: usize },

    #[error("invalid ballot: {0}")]
    InvalidBallot(String),

    #[error("unknown voting rule `{0}`")]
    UnknownRule(String),

    #[error("t = {t} outside schedule horizon 1..={horizon}")]
    OutOfRange { t: usize, horizon: usize },

    #[error("linear system is singular")]
    Singular,

    #[error("incompatible configuration: {0}")]
    Incompatible(String),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
