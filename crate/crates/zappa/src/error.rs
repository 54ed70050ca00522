//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A velocity profile evaluated non-positive at a quadrature node.
    #[error("invalid profile: v({y}) = {value} at node {index} is not positive")]
    InvalidProfile { index: usize, y: f64, value: f64 },

    /// A kernel moment required by the derivation does not exist.
    #[error("kernel moment of order {order} diverges")]
    MomentDivergence { order: usize },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("ill-posed configuration: {0}")]
    IllPosed(String),

    /// NaN detection, blow-up, or a failed factorization mid-computation.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A solvability system that should be regular came out singular.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/config problems, 1 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::SizeMismatch(_)
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
