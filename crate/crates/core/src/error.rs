use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing or out of range. `key` names the offending entry.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance of user {user} is not positive semidefinite")]
    NotPsd { user: usize },

    #[error("quadratic form has imaginary residue {imag:.3e} (real part {real:.3e})")]
    ComplexQuadForm { real: f64, imag: f64 },

    #[error("channel of user {user} is zero but its rate target is positive")]
    ZeroChannel { user: usize },

    #[error("exhaustive order search supports at most {max} users, got {users}")]
    OrderSearchTooLarge { users: usize, max: usize },

    #[error("closed-form precoder of user {user} disagrees with the duality transform: {detail}")]
    PrecoderMismatch { user: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidArgument(_) | Error::Io { .. } | Error::Parse { .. })
    }
}
