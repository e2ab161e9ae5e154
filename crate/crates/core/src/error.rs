use thiserror::Error;

/// Unified error type for the simulator, the training stack and file I/O.
#[derive(Debug, Error)]
pub enum SimError {
    /// A configuration value failed validation. Always names the offending key.
    #[error("configuration error for `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Processing latency is undefined for a non-positive allocation rate.
    #[error("latency undefined: allocation rate must be positive, got {0}")]
    UndefinedLatency(f64),

    /// Committee selection found no base station at or above the threshold.
    #[error("no base station meets the committee reputation threshold")]
    EmptyCommittee,

    /// A loss, parameter or dual variable became NaN or infinite.
    #[error("non-finite value detected in {0}; aborting")]
    NonFinite(String),

    /// Figure emission needs a run artifact that was never produced.
    #[error("missing run artifact: {0}")]
    MissingArtifact(String),

    /// A checkpoint could not be read or fails structural validation.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        SimError::Config { key: key.to_string(), reason: reason.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
