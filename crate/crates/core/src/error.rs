use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance matrix is not positive semidefinite: most negative eigenvalue {min_eigenvalue:e} (tolerance {tolerance:e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("cholesky factorization failed at leading minor {minor} even with jitter {jitter:e}")]
    Cholesky { minor: usize, jitter: f64 },

    #[error("implicit solve is ill-posed: 1 + tau * drift = {value} <= 0 at mode {mode}")]
    IllPosed { mode: usize, value: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("noise restriction requires a diagonal covariance")]
    NonDiagonalRestriction,

    #[error("coupled study requires diagonal noise")]
    NonDiagonalStudy,

    #[error("all {0} paths diverged")]
    AllDiverged(usize),

    #[error("fit window contains a non-positive value at index {0} (path divergence suspected)")]
    NonPositive(usize),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
