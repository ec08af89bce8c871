//! Stochastic gradient descent with random search directions.
//!
//! The iteration is
//!
//! ```text
//! x_{n+1} = x_n - γ_n (V V^T) ∇f_{U}(x_n)
//! ```
//!
//! where `U` is a uniformly drawn component of a finite-sum objective and `V`
//! a random direction with `E[V V^T] = I`. Besides the optimizer this crate
//! carries the pieces needed to check the method's asymptotic behaviour on
//! synthetic problems: direction samplers with moment diagnostics, the noise
//! matrix `Γ = E[V V^T Q V V^T]`, the asymptotic covariance `Σ` (a Lyapunov
//! solve), and log-log rate fits of `E‖x_n - x*‖^{2p}`.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases at the crate root pin the `f64` instantiation used by the harness.

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod directions;
mod format;
pub mod harness;
pub mod numkit;
pub mod objectives;
pub mod optimizer;
pub mod rng;
mod scalar;

pub use scalar::Scalar;

pub use asymptotics::{AsymptoticsError, AsymptoticsReport, CltComparison, MseFit};
pub use directions::{DirectionError, DirectionKind, DirectionSampler, DirectionVector};
pub use numkit::{DenseMatrix, NumError, SymEigDecomposition};
pub use objectives::{FiniteSumObjective, ObjectiveError, OptimumSource, ReferenceOptimum};
pub use optimizer::{
    GradientTable, InitPolicy, Method, NuPolicy, OptimizerError, RunOptions, RunTrace,
    SnapshotPolicy, StepSchedule,
};

/// Row-major dense `f64` matrix.
pub type Matrix = DenseMatrix<f64>;
/// Eigendecomposition of a symmetric `f64` matrix.
pub type SymEig = SymEigDecomposition<f64>;
/// Direction sampler over `f64`.
pub type Sampler = DirectionSampler<f64>;
/// Finite-sum objective over `f64`.
pub type Objective = FiniteSumObjective<f64>;
/// Reference optimum over `f64`.
pub type Reference = ReferenceOptimum<f64>;
/// Step schedule `c / n^α` over `f64`.
pub type Schedule = StepSchedule<f64>;
/// Run trace over `f64`.
pub type Trace = RunTrace<f64>;
/// Stored component gradients over `f64`.
pub type Table = GradientTable<f64>;
/// CLT replication result over `f64`.
pub type Clt = CltComparison<f64>;
