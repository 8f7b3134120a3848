use thiserror::Error;

use crate::tensor::Factor;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown tensor factor {0}")]
    UnknownFactor(Factor),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("trace is {0:.6e}, expected 1")]
    BadTrace(f64),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("steering normalization {0:.3e} is not positive")]
    ZeroNormalization(f64),

    #[error("Kraus set has negative coefficients; Stinespring dilation needs a CP map")]
    SignedKraus,

    #[error("map is not trace preserving (closure error {0:.3e})")]
    NotTracePreserving(f64),

    #[error("perturbation leaves the kernel subspace (residual {0:.3e})")]
    OutsideKernel(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
