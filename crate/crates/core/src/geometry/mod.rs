//! Point-cloud scene parsing: table plane, upright cup cylinder and the raw
//! liquid elevation inside the cup.
//!
//! All functions are pure; the camera sits at the origin of the cloud frame
//! with `z` along the optical axis and `y` pointing down.

mod cylinder;
mod height;
pub mod io;
mod plane;

use nalgebra::Vector3;
use thiserror::Error;

pub use cylinder::{fit_cylinder_ransac, fit_cylinder_ransac_with, CylinderModel};
pub use height::{measure_raw_height, surface_region_indices, RawHeightMeasurement};
pub use plane::{extract_above_plane, fit_plane_ransac, fit_plane_ransac_with, PlaneModel};

/// A point in the camera frame, meters.
pub type Point3 = nalgebra::Point3<f64>;

/// One depth frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Strictly increasing across a stream.
    pub frame_id: u64,
    /// Capture time in seconds, non-negative.
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: u64, timestamp: f64) -> Self {
        Self {
            points,
            frame_id,
            timestamp,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same frame metadata, different points.
    pub fn with_points(&self, points: Vec<Point3>) -> Self {
        Self {
            points,
            frame_id: self.frame_id,
            timestamp: self.timestamp,
        }
    }
}

/// Shared RANSAC knobs for the plane and cylinder fits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Meters.
    pub inlier_threshold: f64,
    /// Fraction of the input that must agree with the best model.
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_threshold: 0.003,
            min_inlier_ratio: 0.2,
            seed: 0,
        }
    }
}

impl RansacConfig {
    fn validate(&self) -> Result<(), GeometryError> {
        if self.iterations == 0 {
            return Err(GeometryError::InvalidParameter(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(GeometryError::InvalidParameter(format!(
                "inlier threshold must be positive, got {}",
                self.inlier_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_ratio) {
            return Err(GeometryError::InvalidParameter(format!(
                "min inlier ratio must lie in [0, 1], got {}",
                self.min_inlier_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no model found: best inlier ratio {best_ratio:.3} below required {required:.3}")]
    NoModelFound { best_ratio: f64, required: f64 },
    #[error("no liquid visible in the search region")]
    NoLiquidVisible,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Two unit vectors spanning the plane orthogonal to `normal`.
pub(crate) fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if normal.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = normal.cross(&helper).normalize();
    let v = normal.cross(&u);
    (u, v)
}
