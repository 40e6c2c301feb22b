use thiserror::Error;

/// Errors raised across the simulator, learner and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario, run or experiment configuration. `key` names the
    /// offending field path when one is known.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A numeric argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's calling contract (length mismatch,
    /// missing directive, ragged inputs, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Internal simulator bookkeeping no longer matches the world.
    #[error("state corruption: {0}")]
    StateCorruption(String),

    /// A gradient step produced NaN or infinity; the update was aborted.
    #[error("non-finite gradient: {0}")]
    NonFinite(String),

    /// The experiment would exceed the configured agent-step budget.
    #[error("budget guard: experiment needs {required} agent-steps, limit is {limit}")]
    Budget { required: u64, limit: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
