use std::fmt;
use std::path::Path;

use super::HarnessError;
use crate::geometry::io::load_point_cloud;
use crate::geometry::{
    extract_above_plane, fit_cylinder_ransac, fit_plane_ransac, measure_raw_height, CylinderModel,
    PlaneModel, PointCloud, RansacConfig, RawHeightMeasurement,
};
use crate::optics::{correct_height, HeightEstimate, LiquidSpec};
use crate::sim::PerceptionConfig;

/// Everything the single-frame pipeline found in one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineReport {
    pub liquid: String,
    pub points: usize,
    pub table: PlaneModel,
    pub cup: CylinderModel,
    pub raw: RawHeightMeasurement,
    pub estimate: HeightEstimate,
}

impl fmt::Display for OfflineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.table.normal;
        let a = self.cup.axis_point;
        writeln!(f, "points:    {}", self.points)?;
        writeln!(
            f,
            "table:     normal ({:.4}, {:.4}, {:.4}) offset {:.4} m, {} inliers",
            n.x, n.y, n.z, self.table.offset, self.table.inlier_count
        )?;
        writeln!(
            f,
            "cup:       axis through ({:.4}, {:.4}, {:.4}) m, radius {:.1} mm, height {:.1} mm, {} inliers",
            a.x,
            a.y,
            a.z,
            self.cup.radius * 1000.0,
            self.cup.height * 1000.0,
            self.cup.inlier_count
        )?;
        writeln!(
            f,
            "raw:       {:.2} mm from {} points",
            self.raw.h_r * 1000.0,
            self.raw.point_count
        )?;
        writeln!(f, "incidence: {:.2} deg", self.raw.alpha.to_degrees())?;
        write!(
            f,
            "height:    {:.2} mm +/- {:.2} mm ({}, {:?})",
            self.estimate.h * 1000.0,
            self.estimate.variance.sqrt() * 1000.0,
            self.liquid,
            self.estimate.source
        )
    }
}

/// Table, cup, raw height and corrected height from one cloud.
pub fn estimate_offline(
    cloud: &PointCloud,
    liquid: &LiquidSpec,
    cfg: &PerceptionConfig,
) -> Result<OfflineReport, HarnessError> {
    liquid.validate()?;
    let ransac: &RansacConfig = &cfg.ransac;
    let table = fit_plane_ransac(cloud, ransac)?;
    let above = extract_above_plane(cloud, &table, cfg.plane_margin);
    let cup = fit_cylinder_ransac(&above, &table, ransac)?;
    let raw = measure_raw_height(cloud, &cup, &table, cfg.diameter_scale)?;
    let estimate = correct_height(&raw, liquid, cfg.raw_sigma)?;
    Ok(OfflineReport {
        liquid: liquid.name.clone(),
        points: cloud.len(),
        table,
        cup,
        raw,
        estimate,
    })
}

pub fn estimate_offline_file(
    path: impl AsRef<Path>,
    liquid: &LiquidSpec,
    cfg: &PerceptionConfig,
) -> Result<OfflineReport, HarnessError> {
    estimate_offline(&load_point_cloud(path)?, liquid, cfg)
}
