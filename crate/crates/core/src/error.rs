use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the sampling engine, the variance evaluators and the
/// experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state out of domain: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("chain did not mix: {0}")]
    Mixing(String),
    #[error("infeasible allocation: {occupied} occupied bins but only {particles} particles")]
    InfeasibleAllocation { occupied: usize, particles: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("potential must be positive, got {value} at {state}")]
    PotentialDomain { value: f64, state: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from a broken runtime invariant rather than
    /// from bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
