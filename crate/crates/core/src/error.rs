use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The threshold v_{n,k} fell outside (0, 1).
    #[error("threshold out of range: v = {value} for n = {n}, k = {k}, t = {t}")]
    ThresholdOutOfRange { n: u64, k: u64, t: f64, value: f64 },

    /// The subcube grid has no cells for the requested n and epsilon.
    #[error("grid degenerate: n = {n}, epsilon = {epsilon} gives fewer than one cell per axis")]
    GridDegenerate { n: u64, epsilon: f64 },

    #[error("density specification: {0}")]
    Density(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
