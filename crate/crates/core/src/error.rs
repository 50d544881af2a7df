use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned statistics for user {user}: condition estimate {condition:.3e}")]
    IllConditioned { user: usize, condition: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("feasibility iteration did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("power control result violates {0}")]
    Invariant(String),

    #[error("exhaustive search refused: {count} candidate assignments exceed the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the CLI, grouped by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::TooLarge { .. } => 2,
            Error::IllConditioned { .. }
            | Error::Factorization(_)
            | Error::NonConvergence { .. }
            | Error::Invariant(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }
}
