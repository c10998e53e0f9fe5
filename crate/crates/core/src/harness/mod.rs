//! Experiment orchestration: configuration, Monte Carlo replication of the
//! CL/ST/FS protocols, metric files and plots.

mod config;
mod csv_io;
mod plot;
mod run;
mod summary;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{AgentsConfig, DataConfig, ExperimentConfig, GraphConfig, Mode, Precision};
pub use csv_io::{emit_csv, read_csv, write_csv, CSV_HEADER};
pub use plot::{emit_plot, render_svg};
pub use run::{
    montecarlo, montecarlo_with, run_mode, run_single, write_artifacts, Corpus, MetricsRecord, MonteCarloOptions, MonteCarloResult,
    RunOutput,
};
pub use summary::{mean_std, traces, Series, SummaryRow, SummaryTable, TracePoint};

use crate::collective::CollectiveError;
use crate::data::DataError;
use crate::learner::LearnerError;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid configuration; `field` names the offending key.
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("run {run} (seed {seed:#018x}) failed: {source}")]
    Run {
        run: usize,
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("nothing to plot")]
    EmptyPlot,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Collective(#[from] CollectiveError),
}

impl HarnessError {
    pub(crate) fn config(field: &str, message: String) -> Self {
        HarnessError::Config { field: field.to_string(), message }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Whether this is a configuration problem rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Config { .. } => true,
            HarnessError::Run { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
