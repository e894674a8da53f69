use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular tridiagonal system (zero pivot at row {row})")]
    Singular { row: usize },

    #[error("{axis} line {line}: {source}")]
    Line {
        axis: &'static str,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite {term} at cell ({i}, {j})")]
    NonFinite { term: &'static str, i: usize, j: usize },

    #[error("dispersion relation did not converge (omega = {omega}, depth = {depth})")]
    NoConvergence { omega: f64, depth: f64 },

    #[error("instability at step {step}, t = {time:.6} s: {reason}")]
    Instability { step: u64, time: f64, reason: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
