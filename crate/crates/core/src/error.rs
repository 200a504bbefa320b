//! Crate-wide error type and result alias.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes disagree: feature widths, table lengths, population sizes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A model object violates its invariants (probabilities, weights, ...).
    #[error("invalid model: {0}")]
    Model(String),

    /// An exact computation was requested beyond the enumerable range.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An optimization run produced non-finite iterates; the partial trace is
    /// attached for post-mortem inspection.
    #[error("optimization diverged at iteration {iter}")]
    Divergence {
        iter: usize,
        trace: Box<crate::optimize::TrainTrace>,
    },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A file or string could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => {
                // Preserve the I/O flavor where possible.
                Error::Parse(format!("csv io: {e}"))
            }
            _ => Error::Parse(format!("csv: {e}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("json: {e}"))
    }
}
