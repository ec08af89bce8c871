//! The SCORS iteration, the plain SGD baseline and their bookkeeping.

mod run;
mod schedule;
mod table;
mod trace;

pub use run::{
    coordinate_cost, frozen_point_mean, initial_nu_sampler, run, run_method, run_sgd_baseline,
    scors_step, InitPolicy, Method, NuPolicy, RunOptions,
};
pub use schedule::{step_condition_warnings, StepSchedule};
pub use table::GradientTable;
pub use trace::{log_spaced, RunTrace, Snapshot, SnapshotPolicy};

use thiserror::Error;

use crate::directions::DirectionError;
use crate::objectives::ObjectiveError;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("run needs at least one iteration")]
    ZeroIterations,
    #[error("non-finite iterate at iteration {iteration} (step size {step:e})")]
    NonFinite { iteration: u64, step: f64 },
    #[error("iterate norm exceeded 1e9 at iteration {iteration} (step size {step:e})")]
    Diverged { iteration: u64, step: f64 },
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}
