//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A certified-safe quantity turned out unsafe; the run must abort.
    #[error("safety violation: {0}")]
    Safety(String),

    /// Run artifacts (trace, ledger) do not belong together or disagree.
    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
