use thiserror::Error;

/// Errors produced by the model, estimation and decomposition layers.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("matrix is not skew-symmetric (max |A + A^T| entry {max_dev:.3e})")]
    NotSkewSymmetric { max_dev: f64 },

    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("ill-conditioned matrix at omega={omega:.6} (cond {cond:.3e} exceeds {limit:.3e})")]
    IllConditioned { omega: f64, cond: f64, limit: f64 },

    #[error("model is not well-posed: min |det(I - H)| = {min_det:.3e} over the frequency grid")]
    NotWellPosed { min_det: f64 },

    #[error("noise spectrum is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotDetectable { min_eig: f64 },

    #[error("H is not strictly causal: entry ({i},{j}) has a nonzero zero-delay tap")]
    NotStrictlyCausal { i: usize, j: usize },

    #[error("solver did not converge after {iters} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NoConvergence { iters: usize, primal: f64, dual: f64 },

    #[error("found {found} zero regions in the diff trace, need at least 3")]
    TooFewZeroRegions { found: usize },

    #[error("generator failed after {attempts} attempts: {reason}")]
    GeneratorExhausted { attempts: usize, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
