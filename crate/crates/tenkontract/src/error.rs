//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid sparse state: {0}")]
    InvalidState(String),

    #[error("network invariant violated: {0}")]
    Network(String),

    #[error("contraction path error: {0}")]
    Path(String),

    #[error("slicing error: {0}")]
    Slice(String),

    #[error("memory budget unreachable: residual peak {residual} bytes exceeds budget {budget} bytes with all bonds sliced")]
    BudgetUnreachable { residual: u64, budget: u64 },

    #[error("engine error: {0}")]
    Engine(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("verification error: {0}")]
    Verify(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
