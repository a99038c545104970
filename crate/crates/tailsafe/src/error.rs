//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("out of domain: {what}")]
    OutOfDomain { what: String },

    #[error("calendar adjustment broke butterfly margins at T={maturity}: g1={g1}, g2={g2}")]
    Adjustment { maturity: f64, g1: f64, g2: f64 },

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("maturities do not bracket 30 days: m1={m1}, m2={m2}")]
    Bracket { m1: u64, m2: u64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate sensitivity denominator: |d nu30| = {0:e}")]
    DegenerateDenominator(f64),

    #[error("sample pairing mismatch: {0}")]
    Pairing(String),

    #[error("qp solver failed: {0}")]
    QpFailure(String),

    #[error("audit error: {0}")]
    Audit(String),

    #[error("config schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
