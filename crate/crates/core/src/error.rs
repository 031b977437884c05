use thiserror::Error;

/// Errors raised by instance handling, hashing and the solvers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KsumError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("refused: {0}")]
    Refused(String),

    /// A metered allocation would exceed the workspace cap.
    #[error("workspace budget exceeded: {requested} cells requested against a cap of {cap}")]
    Budget { cap: usize, requested: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    /// Every hash sampled for some cascade level failed verification.
    #[error("no balanced hash found for cascade level {level} after {attempts} attempts")]
    CascadeFailure { level: usize, attempts: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The run's wall-clock deadline passed before it finished.
    #[error("deadline reached after {target_vectors} target vectors, peak {peak_cells} cells")]
    Deadline {
        target_vectors: u64,
        peak_cells: usize,
    },
}

pub type Result<T> = std::result::Result<T, KsumError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(KsumError::Parameter(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(KsumError::Contract(msg.into()))
}
