use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },

    /// An input that lies outside the domain of the operation
    /// (empty corpus, zero total count, too few points, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// ESTree input that does not match the accepted subset.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("missing prerequisite: {missing} (run {stage} first)")]
    Prerequisite { stage: String, missing: String },

    #[error("gateway configuration error: {0}")]
    GatewayConfig(String),

    #[error("gateway exhausted after {attempts} attempt(s) on profile {profile}: {last_error}")]
    GatewayExhausted {
        profile: String,
        attempts: u32,
        last_error: String,
    },

    #[error("working directory is locked by another stage: {0}")]
    Locked(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the CLI: 1 validation, 2 prerequisite, 3 gateway.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Prerequisite { .. } => 2,
            Error::GatewayConfig(_) | Error::GatewayExhausted { .. } => 3,
            _ => 1,
        }
    }
}
