//! Scenario ingestion, experiment orchestration and report emission.

pub mod estimate;
pub mod experiment;
pub mod generate;
pub mod ingest;
pub mod report;
pub mod verify;

use thiserror::Error;

use crate::incentive::IncentiveError;
use crate::oracle::OracleError;
use crate::park_model::ModelError;
use crate::scheduler::SchedulerError;

pub use estimate::{estimate, estimate_from_csv, parse_estimate_input, Estimate, EstimateInput};
pub use experiment::{
    load_experiments, run_experiment, run_experiment_with, Experiment, Report, RunReport,
    ScenarioSource, Sweep,
};
pub use generate::{iid_scenario, IidSpec};
pub use ingest::{ingest_scenario, load_config, parse_scenario, units_path, Units};
pub use report::{emit_report, summary, Format, RunSummary};
pub use verify::{verify_oracles, VerifyReport, VerifySpec};

/// Errors raised while loading data or running experiments.
#[derive(Debug, Error)]
pub enum SimError {
    /// A required column is missing or malformed.
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unit error: {0}")]
    Unit(String),
    #[error("negative value {value} in column {column} at slot {slot}")]
    NegativeValue {
        slot: usize,
        column: String,
        value: f64,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Incentive(#[from] IncentiveError),
}

impl SimError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
