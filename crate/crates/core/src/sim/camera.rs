//! Synthetic depth camera.
//!
//! The scene lives in a world frame with the origin at the cup's bottom centre
//! and `z` up. Surfaces are sampled on regular grids at the configured point
//! density, culled for visibility from the camera, moved into the camera frame
//! and perturbed along the viewing ray by Gaussian depth noise.
//!
//! Transparent liquids do not return the surface. The camera instead sees the
//! cup bottom through it, at the apparent height `h / f(n, alpha)` along the
//! same ray, where `f` is the refraction correction factor.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::WorldState;
use crate::geometry::{Point3, PointCloud};
use crate::optics::{correction_factor, Opacity};

/// Where the cup's bottom centre sits relative to the camera. The camera
/// looks straight at it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraPose {
    /// Meters.
    pub horizontal: f64,
    /// Meters below the camera.
    pub vertical: f64,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self {
            horizontal: 0.25,
            vertical: 0.75,
        }
    }
}

impl CameraPose {
    /// Camera position in the world frame.
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(-self.horizontal, 0.0, self.vertical)
    }

    /// Rotation taking world vectors into the camera frame (x right, y down,
    /// z forward).
    pub fn world_to_camera(&self) -> Matrix3<f64> {
        let forward = (-self.position()).normalize();
        let right = forward.cross(&Vector3::z()).normalize();
        let down = forward.cross(&right);
        Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
    }

    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Point3 {
        Point3::from(self.world_to_camera() * (p_world - self.position()))
    }

    /// Table normal (world up) expressed in the camera frame.
    pub fn up_in_camera(&self) -> Vector3<f64> {
        self.world_to_camera() * Vector3::z()
    }

    /// Incidence angle of the ray hitting the cup's bottom centre.
    pub fn nominal_incidence(&self) -> f64 {
        self.horizontal.atan2(self.vertical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Samples per m^2 of surface.
    pub point_density: f64,
    /// Per-point depth noise, meters.
    pub sigma_point: f64,
    /// Hz.
    pub frame_rate: f64,
    /// Capture-to-controller delay, seconds.
    pub latency: f64,
    pub camera_pose: CameraPose,
    /// Half side of the rendered table patch, meters.
    pub table_half_extent: f64,
    /// Chance that a frame has no liquid-surface returns.
    pub dropout_probability: f64,
    /// Per-frame chance that perception stalls for `stall_duration`.
    pub stall_probability: f64,
    /// Seconds.
    pub stall_duration: f64,
    /// Relative deviation of real apparent heights from the refraction model;
    /// negative means the corrected height comes out low.
    pub refraction_model_error: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            point_density: 40_000.0,
            sigma_point: 0.0012,
            frame_rate: 30.0,
            latency: 0.2,
            camera_pose: CameraPose::default(),
            table_half_extent: 0.15,
            dropout_probability: 0.01,
            stall_probability: 0.002,
            stall_duration: 0.4,
            refraction_model_error: -0.0205,
        }
    }
}

impl SensorModel {
    /// No noise, no latency, no dropouts, no refraction-model mismatch.
    pub fn ideal() -> Self {
        Self {
            sigma_point: 0.0,
            latency: 0.0,
            dropout_probability: 0.0,
            stall_probability: 0.0,
            refraction_model_error: 0.0,
            ..Self::default()
        }
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }

    fn spacing(&self) -> f64 {
        1.0 / self.point_density.sqrt()
    }

    pub fn validate(&self) -> Result<(), super::SimError> {
        let ok = self.point_density > 0.0
            && self.sigma_point >= 0.0
            && self.frame_rate > 0.0
            && self.latency >= 0.0
            && self.camera_pose.horizontal >= 0.0
            && self.camera_pose.vertical > 0.0
            && self.table_half_extent > 0.0
            && (0.0..=1.0).contains(&self.dropout_probability)
            && (0.0..=1.0).contains(&self.stall_probability)
            && self.stall_duration >= 0.0
            && self.refraction_model_error > -1.0;
        if ok {
            Ok(())
        } else {
            Err(super::SimError::InvalidScenario(format!(
                "invalid sensor model {self:?}"
            )))
        }
    }
}

/// Which part of the scene to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderRegion {
    /// Table, cup walls and liquid.
    #[default]
    Full,
    /// Only what lies inside the cup's footprint: the liquid surface or the
    /// bottom seen through it.
    CupInterior,
}

#[derive(Clone, Copy)]
enum SurfaceKind {
    Rigid,
    Liquid,
}

struct Scene<'a> {
    state: &'a WorldState,
    sensor: &'a SensorModel,
    cam: Vector3<f64>,
    rot: Matrix3<f64>,
    radius: f64,
    rim: f64,
}

impl Scene<'_> {
    /// Whether the ray from the camera to `p` (inside the cup) passes the rim
    /// plane within the opening.
    fn through_opening(&self, p: &Vector3<f64>) -> bool {
        if p.z >= self.rim {
            return true;
        }
        let t = (self.cam.z - self.rim) / (self.cam.z - p.z);
        let q = self.cam + (p - self.cam) * t;
        q.x * q.x + q.y * q.y <= self.radius * self.radius
    }

    /// Whether the segment camera -> `p` crosses the solid cup.
    fn blocked_by_cup(&self, p: &Vector3<f64>) -> bool {
        let d = p - self.cam;
        let a = d.x * d.x + d.y * d.y;
        if a == 0.0 {
            return false;
        }
        let b = 2.0 * (self.cam.x * d.x + self.cam.y * d.y);
        let c = self.cam.x * self.cam.x + self.cam.y * self.cam.y - self.radius * self.radius;
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            return false;
        }
        let sq = disc.sqrt();
        let t0 = ((-b - sq) / (2.0 * a)).max(0.0);
        let t1 = ((-b + sq) / (2.0 * a)).min(1.0 - 1e-9);
        if t0 >= t1 {
            return false;
        }
        let (z0, z1) = (self.cam.z + d.z * t0, self.cam.z + d.z * t1);
        z0.min(z1) <= self.rim && z0.max(z1) >= 0.0
    }

    fn emit(
        &self,
        p: &Vector3<f64>,
        kind: SurfaceKind,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<Point3>,
    ) {
        let pc = self.rot * (p - self.cam);
        let sigma = match kind {
            SurfaceKind::Rigid => self.sensor.sigma_point,
            SurfaceKind::Liquid => self.sensor.sigma_point * self.state.liquid.surface_noise_scale,
        };
        let pc = if sigma > 0.0 {
            let n: f64 = rng.sample(StandardNormal);
            pc + pc.normalize() * (sigma * n)
        } else {
            pc
        };
        out.push(Point3::from(pc));
    }

    fn table(&self, rng: &mut ChaCha8Rng, out: &mut Vec<Point3>) {
        let s = self.sensor.spacing();
        let half = self.sensor.table_half_extent;
        let n = (2.0 * half / s).floor() as i64;
        for i in 0..n {
            for j in 0..n {
                let p = Vector3::new(
                    -half + (i as f64 + 0.5) * s,
                    -half + (j as f64 + 0.5) * s,
                    0.0,
                );
                if p.x * p.x + p.y * p.y <= self.radius * self.radius || self.blocked_by_cup(&p) {
                    continue;
                }
                self.emit(&p, SurfaceKind::Rigid, rng, out);
            }
        }
    }

    fn walls(&self, liquid_height: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Point3>) {
        let s = self.sensor.spacing();
        let n_phi = ((2.0 * std::f64::consts::PI * self.radius) / s).ceil() as usize;
        let n_z = (self.rim / s).floor() as usize;
        for i in 0..n_phi {
            let phi = i as f64 / n_phi as f64 * std::f64::consts::TAU;
            let normal = Vector3::new(phi.cos(), phi.sin(), 0.0);
            for k in 0..n_z {
                let z = (k as f64 + 0.5) * s;
                let p = Vector3::new(self.radius * phi.cos(), self.radius * phi.sin(), z);
                let outside_facing = normal.dot(&(self.cam - p)) > 0.0;
                let visible = if outside_facing {
                    true
                } else {
                    z > liquid_height && self.through_opening(&p)
                };
                if visible {
                    self.emit(&p, SurfaceKind::Rigid, rng, out);
                }
            }
        }
    }

    /// Liquid surface (opaque), bottom seen through the liquid (transparent),
    /// or the bare bottom of an empty cup.
    fn interior(&self, h: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Point3>) {
        let s = self.sensor.spacing();
        let n = (self.radius / s).ceil() as i64;
        let liquid = &self.state.liquid;
        let refractive = match (liquid.opacity, liquid.refractive_index) {
            (Opacity::Transparent, Some(n_l)) if h > 0.0 => Some(n_l),
            _ => None,
        };
        let kind = if h > 0.0 {
            SurfaceKind::Liquid
        } else {
            SurfaceKind::Rigid
        };
        for i in -n..=n {
            for j in -n..=n {
                let p = Vector3::new(i as f64 * s, j as f64 * s, h);
                if p.x * p.x + p.y * p.y >= self.radius * self.radius || !self.through_opening(&p) {
                    continue;
                }
                match refractive {
                    None => self.emit(&p, kind, rng, out),
                    Some(n_l) => {
                        let ray = p - self.cam;
                        let alpha = (ray.xy().norm()).atan2(-ray.z);
                        let f = correction_factor(n_l, alpha).expect("validated liquid");
                        let apparent = h / f * (1.0 + self.sensor.refraction_model_error);
                        let t = (self.cam.z - apparent) / (self.cam.z - h);
                        let q = self.cam + ray * t;
                        if q.x * q.x + q.y * q.y < self.radius * self.radius {
                            self.emit(&q, kind, rng, out);
                        }
                    }
                }
            }
        }
    }
}

/// Render one frame of the full scene.
pub fn render_cloud(state: &WorldState, sensor: &SensorModel, seed: u64) -> PointCloud {
    render_region(state, sensor, seed, RenderRegion::Full)
}

pub fn render_region(
    state: &WorldState,
    sensor: &SensorModel,
    seed: u64,
    region: RenderRegion,
) -> PointCloud {
    let pose = sensor.camera_pose;
    let scene = Scene {
        state,
        sensor,
        cam: pose.position(),
        rot: pose.world_to_camera(),
        radius: state.cup.inner_radius,
        rim: state.cup.height,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surface_dropped =
        sensor.dropout_probability > 0.0 && rng.random::<f64>() < sensor.dropout_probability;
    let h = state.cup_height();
    let mut points = Vec::new();
    if region == RenderRegion::Full {
        scene.table(&mut rng, &mut points);
        scene.walls(h, &mut rng, &mut points);
    }
    if !(surface_dropped && h > 0.0) {
        scene.interior(h, &mut rng, &mut points);
    }
    PointCloud::new(points, 0, state.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::LiquidSpec;
    use crate::sim::{BottleSpec, CupSpec};

    fn world(liquid: LiquidSpec, h: f64) -> WorldState {
        WorldState::new(liquid, CupSpec::blue(), BottleSpec::small(), 400.0, h).unwrap()
    }

    #[test]
    fn camera_frame_conventions() {
        let pose = CameraPose::default();
        let r = pose.world_to_camera();
        assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        // Cup bottom is straight ahead.
        let c = pose.to_camera(&Vector3::zeros());
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12);
        assert!((c.z - 0.25f64.hypot(0.75)).abs() < 1e-12);
        // Up points toward the camera and the top of the image.
        let up = pose.up_in_camera();
        assert!(up.z < 0.0 && up.y < 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let w = world(LiquidSpec::opaque("milk"), 0.04);
        let s = SensorModel::default();
        assert_eq!(render_cloud(&w, &s, 3), render_cloud(&w, &s, 3));
        assert_ne!(render_cloud(&w, &s, 3), render_cloud(&w, &s, 4));
    }

    #[test]
    fn opaque_surface_at_true_height() {
        let w = world(LiquidSpec::opaque("milk"), 0.05);
        let sensor = SensorModel::ideal();
        let cloud = render_region(&w, &sensor, 0, RenderRegion::CupInterior);
        assert!(cloud.len() > 100);
        let up = sensor.camera_pose.up_in_camera();
        let floor = sensor.camera_pose.to_camera(&Vector3::zeros());
        for p in &cloud.points {
            assert!(((p - floor).dot(&up) - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn transparent_surface_appears_lower() {
        let w = world(LiquidSpec::transparent("water", 1.333), 0.05);
        let sensor = SensorModel::ideal();
        let cloud = render_region(&w, &sensor, 0, RenderRegion::CupInterior);
        assert!(cloud.len() > 50);
        let up = sensor.camera_pose.up_in_camera();
        let floor = sensor.camera_pose.to_camera(&Vector3::zeros());
        for p in &cloud.points {
            let e = (p - floor).dot(&up);
            assert!(e < 0.05 && e > 0.05 / 4.1, "elevation {e}");
        }
    }

    #[test]
    fn dropout_removes_only_the_surface() {
        let w = world(LiquidSpec::opaque("milk"), 0.03);
        let sensor = SensorModel {
            dropout_probability: 1.0,
            ..SensorModel::ideal()
        };
        assert!(render_region(&w, &sensor, 1, RenderRegion::CupInterior).is_empty());
        assert!(!render_cloud(&w, &sensor, 1).is_empty());
    }

    #[test]
    fn table_behind_cup_is_hidden() {
        let w = world(LiquidSpec::opaque("milk"), 0.0);
        let sensor = SensorModel::ideal();
        let pose = sensor.camera_pose;
        let scene = Scene {
            state: &w,
            sensor: &sensor,
            cam: pose.position(),
            rot: pose.world_to_camera(),
            radius: w.cup.inner_radius,
            rim: w.cup.height,
        };
        // Just behind the cup on the far side, in its shadow.
        assert!(scene.blocked_by_cup(&Vector3::new(0.05, 0.0, 0.0)));
        assert!(!scene.blocked_by_cup(&Vector3::new(-0.1, 0.0, 0.0)));
        assert!(!scene.blocked_by_cup(&Vector3::new(0.0, 0.1, 0.0)));
    }
}
