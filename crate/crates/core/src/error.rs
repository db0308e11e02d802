use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt archive: {0}")]
    Corruption(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing text embedding for prompt {0:?}")]
    MissingEmbedding(String),

    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),

    #[error("could not parse LLM response: {0}")]
    Parse(String),

    #[error("iteration {iteration} failed: {reason}")]
    Iteration { iteration: u32, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("transport: {0}")]
    Transport(String),

    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),

    #[error("malformed provider response: {0}")]
    Malformed(String),

    #[error("no replay entry for request digest {0}")]
    ReplayMiss(String),

    #[error("scripted provider queue is empty")]
    QueueEmpty,

    #[error("replay script: {0}")]
    Script(String),
}
