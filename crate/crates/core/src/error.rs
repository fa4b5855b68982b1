use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bin coordinates or linear index outside the grid.
    #[error("addressing error: {0}")]
    Addressing(String),

    /// Invalid caller-supplied argument (empty windows, out-of-range rewards, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Invalid configuration; `path` is the namespaced config key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    /// Non-finite values detected; `episode` is set when raised inside a run.
    #[error("numeric failure{}: {message}", episode.map(|e| format!(" at episode {e}")).unwrap_or_default())]
    Numeric {
        episode: Option<u64>,
        message: String,
    },

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint header is corrupt: {0}")]
    CheckpointHeader(String),

    #[error("checkpoint is truncated")]
    CheckpointTruncated,

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("checkpoint body is malformed: {0}")]
    CheckpointBody(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            episode: None,
            message: message.into(),
        }
    }

    /// Attach an episode index to a numeric failure.
    pub fn at_episode(self, episode: u64) -> Self {
        match self {
            Error::Numeric { message, .. } => Error::Numeric {
                episode: Some(episode),
                message,
            },
            other => other,
        }
    }
}
