use std::io;

use thiserror::Error;

/// Errors raised by the field, form, construction and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("complex direction {index} out of range 1..={n}")]
    DirectionOutOfRange { index: usize, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("field is not real: max |imag| = {max_imag:e} exceeds {tol:e}")]
    NotReal { max_imag: f64, tol: f64 },

    #[error("right-hand side is not mean-zero: mean = {mean:e} (tolerance {tol:e})")]
    NotMeanZero { mean: f64, tol: f64 },

    #[error("right-hand side varies along axes the operator does not see (mode amplitude {amplitude:e})")]
    InvisibleVariation { amplitude: f64 },

    #[error("matrix not positive definite at grid point {index} {coords:?} (relative pivot {pivot:e})")]
    NotPositive { index: usize, coords: Vec<usize>, pivot: f64 },

    #[error("matrix not hermitian: deviation {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("form is not real: component pair deviation {deviation:e}")]
    FormNotReal { deviation: f64 },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("compatibility residual {residual:e} exceeds {tol:e}")]
    Compatibility { residual: f64, tol: f64 },

    #[error("Krylov solver stagnated after {iterations} iterations (residual {residual:e})")]
    KrylovStagnation {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("solution path leaves the positive cone near t = {t} (residual {residual:e})")]
    ConeExit { t: f64, residual: f64 },

    #[error("Newton iteration did not converge at t = {t} within {iterations} iterations (residual {residual:e})")]
    NotConverged {
        t: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
