//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by channel assembly, lattice construction, decoding and
/// simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The requested configuration is outside what the implementation supports.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A numerical routine failed (factorization, normalization, estimation).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The closest-point search hit its node budget before completing.
    ///
    /// `best` is the best integer vector found so far; it is not guaranteed
    /// to be the closest point.
    #[error("sphere decoder budget of {budget} node visits exhausted")]
    SearchBudget { budget: u64, best: Vec<i64> },

    /// Text input (lattice description, matrix file) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
