use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("channel index {index} out of range for {channels} channel(s)")]
    Channel { index: usize, channels: usize },

    #[error("propagation error at step {step}: {reason}")]
    Propagation { step: usize, reason: String },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Serialize(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
