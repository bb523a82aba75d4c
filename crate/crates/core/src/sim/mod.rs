//! Closed-loop world model: cup, bottle and liquid state, a parametric
//! outflow model driven by the wrist angle, and a synthetic depth camera.

mod camera;
mod closed_loop;
mod world;

pub use camera::{render_cloud, render_region, CameraPose, RenderRegion, SensorModel};
pub use closed_loop::{run_closed_loop, PerceptionConfig, Scenario, SimSettings, TrialResult};
pub use world::{
    builtin_bottles, builtin_cups, step_world, BottleSpec, CupSpec, OutflowModel, WorldState,
};

use thiserror::Error;

use crate::control::ControlError;
use crate::geometry::GeometryError;
use crate::optics::OpticsError;
use crate::tracking::TrackingError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scene perception failed: {0}")]
    Perception(#[from] GeometryError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("trial timed out after {elapsed:.1} s with {height_mm:.2} mm in the cup")]
    TrialTimeout { elapsed: f64, height_mm: f64 },
}
