//! Experiment runner: config loading, metrics, sweeps, convergence studies
//! and result files.

mod config;
mod converge;
mod fit;
mod metrics;
mod output;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    load_config, load_convergence, load_experiment, parse_config, parse_convergence, parse_experiment, set_param,
    ExperimentSpec, SweepAxis,
};
pub use converge::{
    convergence_experiment, loop_run, single_update_trials, ConvergenceConfig, ConvergenceReport, LoopReport,
    TrialReport,
};
pub use fit::{fit_models, FittedModel};
pub use metrics::{compute_metrics, nearest_rank, MetricsSummary, DEFAULT_WARMUP};
pub use output::{emit_run, emit_sweep_header, emit_sweep_row, write_json, SWEEP_HEADER};
pub use sweep::{run_sweep, SweepFailure, SweepReport, SweepRow};

use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no error samples after a warmup of {warmup} steps")]
    EmptyLog { warmup: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Run(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// True for problems with the user's input rather than with a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config { .. } | Self::Sim(SimError::Config(_)))
    }
}
