//! Experiment families, statistics, CSV reports, config files and offline
//! estimation on recorded clouds.

mod config;
mod experiment;
mod offline;
mod stats;

pub use config::{Catalog, PlanFile, ScenarioFile, TrialEntry};
pub use experiment::{
    run_experiment, ExperimentPlan, ExperimentReport, Family, TrialOutcome, TrialRecord, TrialSpec,
    CSV_HEADER, DEFAULT_PLAN_SEED, DEFAULT_TRIALS_PER_GROUP, HEADROOM_ML,
};
pub use offline::{estimate_offline, estimate_offline_file, OfflineReport};
pub use stats::{height_error_to_volume, SummaryStats};

use thiserror::Error;

use crate::geometry::io::CloudIoError;
use crate::geometry::GeometryError;
use crate::optics::OpticsError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("unknown experiment family `{0}`")]
    UnknownFamily(String),
    #[error("unknown {kind} `{name}`")]
    UnknownPreset { kind: &'static str, name: String },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    CloudIo(#[from] CloudIoError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
