//! Polytunnel simulation: pickers walking a serpentine route, a robot
//! following a sensing policy, noisy sensors and per-picker particle filters.
//!
//! Every run is deterministic given its seed. Separate random streams drive
//! each picker, each GPS receiver, the leg detector and each filter, so the
//! world unfolds identically for every tracking method compared.

mod config;
mod experiment;
mod gps;
mod metrics;
mod picker;
mod robot;
mod route;
mod world;

use thiserror::Error;

pub use config::{ExperimentConfig, MapSource, Method, Policy, SensorSet, SuiteKind, WorldParams};
pub use experiment::{run_experiment, run_seed, run_suite, write_metrics_csv, RunArtifacts, SuiteReport};
pub use gps::{GpsNoiseModel, GpsNoiseParams};
pub use metrics::{compute_metrics, summarize, MethodSummary, MetricsRecord, SeedSummary, METRICS_HEADER};
pub use picker::{PickerAgent, PickerParams};
pub use robot::{RobotAgent, RobotParams};
pub use route::PickingRoute;
pub use world::{Environment, SensorEvent, World};

use crate::belief::FilterError;
use crate::planner::PlannerError;
use crate::sensors::ObservationError;
use crate::topology::{LayoutError, MapError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("filter failure: {0}")]
    Filter(#[from] FilterError),
    #[error("sensor failure: {0}")]
    Observation(#[from] ObservationError),
    #[error("planner failure: {0}")]
    Planner(#[from] PlannerError),
    #[error("invariant violated at t = {time}: {what}")]
    Invariant { time: f64, what: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    /// Whether the error comes from bad input rather than from the run.
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Config(_) | SimError::Map(_) | SimError::Layout(_))
    }
}
