//! Experiment front end: config parsing, experiment drivers and artifacts.
//!
//! An experiment is a pure function of its config. Results are computed in
//! memory (replicates may run on a worker pool), then every file is written
//! in one finalization step, so a failed run leaves no partial output.

mod artifacts;
mod config;
mod experiments;
mod timing;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use artifacts::{
    emit_trace_csv, read_trace_csv, ArtifactFile, ExperimentArtifacts, MANIFEST_FILE, SUMMARY_FILE,
    TRACE_HEADER,
};
pub use config::{
    parse_config, validate, validate_step_conditions, ConfigDocument, Entry, Experiment,
    ExperimentConfig, InitChoice, ProblemFamily, ReferenceChoice, FALLBACK_OUT_DIR, OUT_DIR_ENV,
};
pub use experiments::{
    build_problem, compute_experiment, run_experiment, ExperimentResult, MethodRuns, Problem,
};
pub use timing::{timing_bench, TimingRow, TimingTable, REFERENCE_SECONDS_PER_ITERATION};

use crate::asymptotics::AsymptoticsError;
use crate::directions::DirectionError;
use crate::numkit::NumError;
use crate::objectives::ObjectiveError;
use crate::optimizer::OptimizerError;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed config text; `line` is 1-based, 0 for overrides.
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error(transparent)]
    Num(#[from] NumError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 1 for config problems, 2 for failures while
    /// running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}
