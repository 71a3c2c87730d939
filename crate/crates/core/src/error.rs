use alloc::string::String;

/// Errors raised by the primitives, models, engine and diagnostics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, which is not within tolerance of 1")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("non-finite value encountered")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {rows} rows of length {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("agent count {m} exceeds the enumeration limit {max}")]
    TooLarge { m: usize, max: usize },

    #[error("agent count must be at least 2, got {0}")]
    InvalidAgentCount(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sender and receiver are the same agent ({0})")]
    SelfGossip(usize),

    #[error("`{0}` is not a convex function in the catalog")]
    NonConvexCatalog(String),

    #[error("adapted rule returned a subset of size {found}, expected {expected}")]
    IrregularSequence { expected: usize, found: usize },

    #[error("trajectory has not converged: drift {drift:e} exceeds tolerance {tol:e}")]
    NotConverged { drift: f64, tol: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
