use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{plane_basis, GeometryError, PlaneModel, Point3, PointCloud, RansacConfig};
use crate::par::{self, ExecMode};

/// Radius range accepted for cup hypotheses, meters.
const MIN_RADIUS: f64 = 0.005;
const MAX_RADIUS: f64 = 0.2;

/// An upright cup: axis through `axis_point` (on the table) along
/// `axis_direction` (the table normal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderModel {
    pub axis_point: Point3,
    pub axis_direction: Vector3<f64>,
    pub radius: f64,
    /// Rim elevation above the table.
    pub height: f64,
    pub inlier_count: usize,
}

impl CylinderModel {
    /// Distance of `p` from the axis.
    pub fn radial_distance(&self, p: &Point3) -> f64 {
        let d = p - self.axis_point;
        (d - self.axis_direction * d.dot(&self.axis_direction)).norm()
    }

    /// Elevation of `p` along the axis, measured from the table.
    pub fn elevation(&self, p: &Point3) -> f64 {
        (p - self.axis_point).dot(&self.axis_direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Circle {
    center: Vector2<f64>,
    radius: f64,
}

impl Circle {
    fn through(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> Option<Self> {
        let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        if d.abs() < 1e-15 {
            return None;
        }
        let (a2, b2, c2) = (a.norm_squared(), b.norm_squared(), c.norm_squared());
        let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
        let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
        let center = Vector2::new(ux, uy);
        let radius = (a - center).norm();
        (MIN_RADIUS..=MAX_RADIUS)
            .contains(&radius)
            .then_some(Self { center, radius })
    }

    fn residual(&self, p: &Vector2<f64>) -> f64 {
        (p - self.center).norm() - self.radius
    }

    fn count_inliers(&self, pts: &[Vector2<f64>], threshold: f64) -> usize {
        pts.iter()
            .filter(|p| self.residual(p).abs() < threshold)
            .count()
    }

    /// Gauss-Newton on the geometric distance.
    fn refine(mut self, pts: &[Vector2<f64>]) -> Self {
        if pts.len() < 3 {
            return self;
        }
        for _ in 0..20 {
            let mut jtj = Matrix3::zeros();
            let mut jtr = Vector3::zeros();
            for p in pts {
                let d = p - self.center;
                let dist = d.norm();
                if dist < 1e-12 {
                    continue;
                }
                let j = Vector3::new(-d.x / dist, -d.y / dist, -1.0);
                let r = dist - self.radius;
                jtj += j * j.transpose();
                jtr += j * r;
            }
            let Some(step) = jtj.lu().solve(&(-jtr)) else {
                break;
            };
            self.center += Vector2::new(step.x, step.y);
            self.radius += step.z;
            if step.norm() < 1e-12 {
                break;
            }
        }
        self
    }
}

/// RANSAC fit of an upright cylinder whose axis is parallel to the table
/// normal. Points are projected onto the table plane and a circle is fitted
/// there; the cylinder height is the highest inlier's elevation.
pub fn fit_cylinder_ransac(
    cloud: &PointCloud,
    table: &PlaneModel,
    cfg: &RansacConfig,
) -> Result<CylinderModel, GeometryError> {
    fit_cylinder_ransac_with(cloud, table, cfg, ExecMode::default())
}

pub fn fit_cylinder_ransac_with(
    cloud: &PointCloud,
    table: &PlaneModel,
    cfg: &RansacConfig,
    mode: ExecMode,
) -> Result<CylinderModel, GeometryError> {
    cfg.validate()?;
    let no_model = |best_ratio| GeometryError::NoModelFound {
        best_ratio,
        required: cfg.min_inlier_ratio,
    };
    if cloud.is_empty() {
        return Err(GeometryError::DegenerateInput("empty cloud".into()));
    }
    if cloud.len() < 3 {
        return Err(no_model(0.0));
    }
    let axis = table.normal;
    let (u, v) = plane_basis(&axis);
    let flat: Vec<Vector2<f64>> = cloud
        .points
        .iter()
        .map(|p| Vector2::new(u.dot(&p.coords), v.dot(&p.coords)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hypotheses: Vec<Option<Circle>> = (0..cfg.iterations)
        .map(|_| {
            let idx = sample(&mut rng, flat.len(), 3);
            Circle::through(
                &flat[idx.index(0)],
                &flat[idx.index(1)],
                &flat[idx.index(2)],
            )
        })
        .collect();

    let threshold = cfg.inlier_threshold;
    let Some((best_idx, best_count)) = par::argmax_by_key(&hypotheses, mode, |h| {
        h.as_ref().map(|c| c.count_inliers(&flat, threshold))
    }) else {
        return Err(no_model(0.0));
    };
    let mut circle = hypotheses[best_idx].expect("scored hypothesis exists");
    let mut count = best_count;

    let inliers: Vec<Vector2<f64>> = flat
        .iter()
        .filter(|p| circle.residual(p).abs() < threshold)
        .copied()
        .collect();
    let refined = circle.refine(&inliers);
    if (MIN_RADIUS..=MAX_RADIUS).contains(&refined.radius) {
        let refined_count = refined.count_inliers(&flat, threshold);
        if refined_count >= count {
            circle = refined;
            count = refined_count;
        }
    }

    let ratio = count as f64 / flat.len() as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(no_model(ratio));
    }

    let height = cloud
        .points
        .iter()
        .zip(&flat)
        .filter(|(_, q)| circle.residual(q).abs() < threshold)
        .map(|(p, _)| table.signed_distance(p))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(height > 0.0) {
        return Err(no_model(ratio));
    }

    let axis_point = Point3::from(u * circle.center.x + v * circle.center.y + axis * table.offset);
    Ok(CylinderModel {
        axis_point,
        axis_direction: axis,
        radius: circle.radius,
        height,
        inlier_count: count,
    })
}
