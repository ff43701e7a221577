//! Nonlinear shrinkage estimation of large-dimensional covariance and
//! precision matrices.
//!
//! When the matrix dimension `p` is comparable to the sample size `n`, the
//! sample covariance matrix systematically overspreads its eigenvalues: the
//! large ones are biased upward and the small ones downward. This crate
//! estimates the limiting population spectrum by inverting the
//! Marčenko–Pastur equation and applies an individually tuned (nonlinear)
//! correction to every sample eigenvalue, keeping the sample eigenvectors.
//!
//! The pipeline:
//!
//! 1. [`linalg`] — sample covariance and symmetric eigendecomposition.
//! 2. [`basis`] — a mixture basis of candidate population spectra (atoms
//!    and linear ramps) with closed-form Stieltjes-type transforms.
//! 3. [`mp`] — the forward Marčenko–Pastur map: from a population mixture
//!    to the support, density and boundary Stieltjes values of the limiting
//!    sample spectrum.
//! 4. [`fit`] — the inverse problem: fit mixture weights to the observed
//!    eigenvalues by sequential linear programming over the MP manifold.
//! 5. [`shrink`] — oracle and bona fide shrinkage factors for covariance
//!    and precision estimation, plus linear-shrinkage and cross-validation
//!    baselines.
//! 6. [`mc`] — a Monte Carlo harness measuring estimator quality by PRIAL
//!    (percentage relative improvement in average loss).
//!
//! Start with the examples: `cargo run --release --example shrink_covariance`.

pub mod basis;
pub mod cli;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod mc;
pub mod mp;
pub mod shrink;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("dimension p = {p} must be smaller than sample size n = {n}")]
    ConcentrationOutOfRange { p: usize, n: usize },

    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    #[error("transform evaluated on the support of the measure at {0}")]
    OnSupport(f64),

    #[error("point {0} lies outside the spectral bulk")]
    OutsideBulk(f64),

    #[error("lambda(x) parametrization is not strictly increasing near x = {0}")]
    NonMonotone(f64),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("singular linearization at grid index {0}")]
    SingularLinearization(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
