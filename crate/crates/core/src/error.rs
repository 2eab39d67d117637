use thiserror::Error;

/// Errors raised by contract checks across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} dimension {size} exceeds the dense cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("eigendecomposition failed: {0}")]
    Decomposition(String),

    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error("invalid energy window: {0}")]
    InvalidWindow(String),

    #[error("energy window contains no eigenvalues")]
    EmptyWindow,

    #[error("empty QPE grid (m_lo = {m_lo}, m_hi = {m_hi})")]
    EmptyGrid { m_lo: i64, m_hi: i64 },

    #[error("QPE weight q[{index}] = {value} exceeds 1 beyond roundoff")]
    WeightAboveOne { index: usize, value: f64 },

    #[error("observable {index} is not an involution (||A^2 - I|| = {residual:.3e})")]
    NotInvolution { index: usize, residual: f64 },

    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
