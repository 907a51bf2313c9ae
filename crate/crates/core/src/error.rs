//! Crate-wide error type.

use thiserror::Error;

/// All fallible operations in this crate return [`Error`].
#[derive(Error, Debug)]
pub enum Error {
    /// An index is out of range or zero (indices are 1-based).
    #[error("index error: {0}")]
    Index(String),

    /// A mode list is not a permutation of the tensor's modes, or a mode
    /// number is out of range.
    #[error("mode error: {0}")]
    Mode(String),

    /// Shapes are inconsistent (non-square Gram, extent mismatch, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// A matrix expected to be positive semi-definite has a significantly
    /// negative eigenvalue.
    #[error(
        "matrix is not positive semi-definite: min eigenvalue {min_eig:.3e} (scale {scale:.3e})"
    )]
    NotPsd { min_eig: f64, scale: f64 },

    /// Materializing would exceed the configured size guard.
    #[error("result too large: {entries} entries exceeds guard of {guard}")]
    TooLarge { entries: u128, guard: u128 },

    /// A contraction plan does not reduce the network to a single node, or
    /// references unknown nodes.
    #[error("plan error: {0}")]
    Plan(String),

    /// A network failed validation; each entry describes one violation.
    #[error("invalid network: {}", .0.join("; "))]
    Invalid(Vec<String>),

    /// A decomposition format is malformed or inconsistent with the data.
    #[error("format error: {0}")]
    Format(String),

    /// A sampling prefix has zero probability mass.
    #[error("zero-probability prefix: {0}")]
    ZeroPrefix(String),

    /// A numeric parameter is out of its valid range.
    #[error("parameter error: {0}")]
    Param(String),

    /// The data tensor has zero Frobenius norm, so relative error is undefined.
    #[error("data tensor has zero norm; relative error is undefined")]
    ZeroData,

    /// A file could not be parsed (bad magic, truncated header, bad syntax).
    #[error("parse error: {0}")]
    Parse(String),

    /// A file parsed but its contents are inconsistent.
    #[error("corrupt file: {0}")]
    CorruptFile(String),

    /// An eigen/SVD routine failed to converge.
    #[error("numerical factorization failed: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
