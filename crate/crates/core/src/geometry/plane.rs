use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GeometryError, Point3, PointCloud, RansacConfig};
use crate::par::{self, ExecMode};

/// Plane `normal · p = offset`, with the normal pointing toward the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inlier_count: usize,
}

impl PlaneModel {
    /// Positive on the camera side.
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    /// Exact plane through three points, oriented toward the origin.
    pub fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let norm = n.norm();
        let scale = (b - a).norm().max((c - a).norm());
        if !(norm > 1e-12 * scale * scale) {
            return None;
        }
        let normal = n / norm;
        Some(
            Self {
                normal,
                offset: normal.dot(&a.coords),
                inlier_count: 0,
            }
            .facing_origin(),
        )
    }

    fn facing_origin(mut self) -> Self {
        if self.offset > 0.0 {
            self.normal = -self.normal;
            self.offset = -self.offset;
        }
        self
    }

    fn count_inliers(&self, points: &[Point3], threshold: f64) -> usize {
        points
            .iter()
            .filter(|p| self.signed_distance(p).abs() < threshold)
            .count()
    }
}

fn centroid_and_scatter(points: &[Point3]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let c = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords)
        / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.coords - c;
        acc + d * d.transpose()
    });
    (c, scatter / n)
}

/// Total least squares plane through `points`.
fn least_squares_plane(points: &[Point3]) -> Option<PlaneModel> {
    if points.len() < 3 {
        return None;
    }
    let (c, scatter) = centroid_and_scatter(points);
    let eig = SymmetricEigen::new(scatter);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal = eig.eigenvectors.column(imin).into_owned().normalize();
    if !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(
        PlaneModel {
            normal,
            offset: normal.dot(&c),
            inlier_count: 0,
        }
        .facing_origin(),
    )
}

fn is_collinear(points: &[Point3]) -> bool {
    let (_, scatter) = centroid_and_scatter(points);
    let mut ev: Vec<f64> = SymmetricEigen::new(scatter)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// RANSAC fit of the dominant plane (the table).
///
/// The returned normal faces the camera, so [`PlaneModel::signed_distance`]
/// is positive for points between the table and the camera.
pub fn fit_plane_ransac(
    cloud: &PointCloud,
    cfg: &RansacConfig,
) -> Result<PlaneModel, GeometryError> {
    fit_plane_ransac_with(cloud, cfg, ExecMode::default())
}

/// [`fit_plane_ransac`] with an explicit execution mode. The result does not
/// depend on the mode.
pub fn fit_plane_ransac_with(
    cloud: &PointCloud,
    cfg: &RansacConfig,
    mode: ExecMode,
) -> Result<PlaneModel, GeometryError> {
    cfg.validate()?;
    let points = &cloud.points;
    if points.len() < 3 {
        return Err(GeometryError::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if is_collinear(points) {
        return Err(GeometryError::DegenerateInput(
            "all points are collinear".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hypotheses: Vec<Option<PlaneModel>> = (0..cfg.iterations)
        .map(|_| {
            let idx = sample(&mut rng, points.len(), 3);
            PlaneModel::through(
                &points[idx.index(0)],
                &points[idx.index(1)],
                &points[idx.index(2)],
            )
        })
        .collect();

    let threshold = cfg.inlier_threshold;
    let best = par::argmax_by_key(&hypotheses, mode, |h| {
        h.as_ref().map(|m| m.count_inliers(points, threshold))
    });
    let Some((best_idx, best_count)) = best else {
        return Err(GeometryError::NoModelFound {
            best_ratio: 0.0,
            required: cfg.min_inlier_ratio,
        });
    };
    let mut model = hypotheses[best_idx].expect("scored hypothesis exists");
    model.inlier_count = best_count;

    // Polish on the tight core of the consensus set, so that structure just
    // above the table (a cup bottom, the foot of a wall) does not drag the
    // plane up. Keep the polish only if it does not lose support.
    let inliers: Vec<Point3> = points
        .iter()
        .filter(|p| model.signed_distance(p).abs() < 0.5 * threshold)
        .copied()
        .collect();
    if let Some(mut refined) = least_squares_plane(&inliers) {
        refined.inlier_count = refined.count_inliers(points, threshold);
        if refined.inlier_count >= model.inlier_count {
            model = refined;
        }
    }

    let ratio = model.inlier_count as f64 / points.len() as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(GeometryError::NoModelFound {
            best_ratio: ratio,
            required: cfg.min_inlier_ratio,
        });
    }
    Ok(model)
}

/// Points strictly more than `margin` above `table`, in input order.
pub fn extract_above_plane(cloud: &PointCloud, table: &PlaneModel, margin: f64) -> PointCloud {
    debug_assert!(margin >= 0.0);
    let points = cloud
        .points
        .iter()
        .filter(|p| table.signed_distance(p) > margin)
        .copied()
        .collect();
    cloud.with_points(points)
}
