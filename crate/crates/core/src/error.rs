use thiserror::Error;

/// Errors raised by the interpolation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Weights are negative, non-finite, or do not sum to one.
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// A quantity that must be nonzero (mass, denominator, beta) vanished.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Wraps an error raised while processing one interpolation target.
    #[error("target {index}: {source}")]
    Target {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Whether the error comes from bad configuration or input files rather
    /// than from a numerical failure.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse(_) | Error::Io(_) | Error::InvalidInput(_) => true,
            Error::Target { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
