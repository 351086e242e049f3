use thiserror::Error;

/// Errors raised by the simulator, the learning machinery and the experiment runner.
#[derive(Debug, Error)]
pub enum SimError {
    /// A configuration value violates a parameter invariant. `key` is the dotted config path.
    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    /// A caller broke an operation's precondition (dimension mismatch, bad allocation, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A physical-layer input was outside the model's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl SimError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        SimError::Contract(message.into())
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
