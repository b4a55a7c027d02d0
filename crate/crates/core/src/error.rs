use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operands of incompatible dimension.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// A parameter or configuration value outside its admissible range.
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An operation called outside its contract (empty input, wrong model kind).
    #[error("usage error: {0}")]
    Usage(String),

    /// Argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data that violates a structural requirement.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model-level requirement failed (e.g. a covariance that is not PSD).
    #[error("model error: {0}")]
    Model(String),

    /// A norm or expectation that is infinite for the given law.
    #[error("diverged: {0}")]
    Diverged(String),

    /// Moments required by the operation do not exist.
    #[error("heavy tail: {0}")]
    HeavyTail(String),

    /// Too few points above the Monte Carlo noise floor.
    #[error("insufficient signal: {usable} usable points, {required} required")]
    InsufficientSignal { usable: usize, required: usize },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
