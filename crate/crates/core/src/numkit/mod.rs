//! Small dense linear algebra: the pieces the asymptotic covariance pipeline
//! needs and nothing more.

mod eigen;
mod expm;
mod lyapunov;
mod matrix;

pub use eigen::{sym_eig, SymEigDecomposition};
pub use expm::mat_exp;
pub use lyapunov::{
    default_horizon, quadrature_sigma_oracle, solve_lyapunov_transposed, DEFAULT_QUADRATURE_STEPS,
};
pub use matrix::DenseMatrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    Shape {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NonSymmetric { row: usize, col: usize, gap: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("spectrum not in the open right half-plane (smallest eigenvalue {min_eigenvalue})")]
    UnstableSpectrum { min_eigenvalue: f64 },
    #[error("quadrature horizon too short: tail bound {tail:e} exceeds 1e-9")]
    HorizonTooShort { tail: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("Jacobi sweeps did not converge (off-diagonal norm {off_norm:e})")]
    NoConvergence { off_norm: f64 },
}
