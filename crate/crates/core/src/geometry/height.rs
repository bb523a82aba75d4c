use std::f64::consts::FRAC_PI_2;

use super::{CylinderModel, GeometryError, PlaneModel, PointCloud};

/// How far below the table plane a point may sit and still count as cup
/// bottom. Depth noise scatters an empty cup's bottom to both sides.
const BOTTOM_SLACK: f64 = 0.01;

/// Apparent liquid height read straight from the depth data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawHeightMeasurement {
    /// Mean elevation of the surface points above the inner cup bottom, meters.
    pub h_r: f64,
    /// Incidence angle of the camera ray on the liquid surface, radians.
    pub alpha: f64,
    pub point_count: usize,
    pub timestamp: f64,
}

/// Indices of points inside the reduced-diameter search region: within
/// `diameter_scale * radius` of the axis and between cup bottom and rim.
pub fn surface_region_indices(
    cloud: &PointCloud,
    cup: &CylinderModel,
    diameter_scale: f64,
) -> Vec<usize> {
    let max_radius = diameter_scale * cup.radius;
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let e = cup.elevation(p);
            e >= -BOTTOM_SLACK && e <= cup.height && cup.radial_distance(p) <= max_radius
        })
        .map(|(i, _)| i)
        .collect()
}

/// Average the surface region into a raw height and an incidence angle.
///
/// The cup bottom is taken to be the table plane. The angle is measured
/// between the ray from the camera (the cloud origin) to the centroid of the
/// selected points and the table normal.
pub fn measure_raw_height(
    cloud: &PointCloud,
    cup: &CylinderModel,
    table: &PlaneModel,
    diameter_scale: f64,
) -> Result<RawHeightMeasurement, GeometryError> {
    if !(diameter_scale > 0.0 && diameter_scale < 1.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "diameter scale must lie in (0, 1), got {diameter_scale}"
        )));
    }
    let idx = surface_region_indices(cloud, cup, diameter_scale);
    if idx.is_empty() {
        return Err(GeometryError::NoLiquidVisible);
    }
    let n = idx.len() as f64;
    let mean_elevation = idx
        .iter()
        .map(|&i| table.signed_distance(&cloud.points[i]))
        .sum::<f64>()
        / n;
    let centroid = idx.iter().fold(nalgebra::Vector3::zeros(), |acc, &i| {
        acc + cloud.points[i].coords
    }) / n;
    let cos_alpha = (centroid.dot(&table.normal).abs() / centroid.norm()).clamp(0.0, 1.0);
    let alpha = cos_alpha.acos().min(FRAC_PI_2 - 1e-9);

    Ok(RawHeightMeasurement {
        h_r: mean_elevation.max(0.0),
        alpha,
        point_count: idx.len(),
        timestamp: cloud.timestamp,
    })
}
