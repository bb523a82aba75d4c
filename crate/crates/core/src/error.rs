use thiserror::Error;

use crate::control::ControlError;
use crate::geometry::io::CloudIoError;
use crate::geometry::GeometryError;
use crate::harness::HarnessError;
use crate::optics::OpticsError;
use crate::sim::SimError;
use crate::tracking::TrackingError;

/// Any error the crate can produce.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    CloudIo(#[from] CloudIoError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
