use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed, or violates a constraint.
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// Caller asked for something outside an operation's domain.
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("oracle scale guard: {size} candidate capacities exceeds limit {limit}")]
    ScaleGuard { size: u64, limit: u64 },

    /// A runtime invariant check failed during simulation.
    #[error("invariant violated at slot {slot}: {message}")]
    Invariant { slot: u64, message: String },

    #[error("missing series: {0}")]
    MissingSeries(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for configuration problems, 2 for
    /// everything that goes wrong at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } => 1,
            _ => 2,
        }
    }
}
