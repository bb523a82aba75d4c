use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    render_cloud, render_region, step_world, BottleSpec, CupSpec, OutflowModel, RenderRegion,
    SensorModel, SimError, WorldState,
};
use crate::control::{ControllerConfig, ControllerPhase, Observation, PourCommand, PourController};
use crate::geometry::{
    extract_above_plane, fit_cylinder_ransac_with, fit_plane_ransac_with, measure_raw_height,
    CylinderModel, GeometryError, PlaneModel, RansacConfig,
};
use crate::optics::{correct_height, LiquidSpec, DEFAULT_RAW_SIGMA};
use crate::par::ExecMode;
use crate::tracking::{FilterParams, FilterState, FrameObservation, Tracker};

/// Settings of the perception front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub ransac: RansacConfig,
    /// Points closer than this to the table are dropped before the cup fit, m.
    pub plane_margin: f64,
    /// Radius of the surface search region relative to the cup radius.
    pub diameter_scale: f64,
    /// Standard deviation of a raw height reading, m.
    pub raw_sigma: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            plane_margin: 0.005,
            diameter_scale: 0.8,
            raw_sigma: DEFAULT_RAW_SIGMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub sensor: SensorModel,
    pub controller: ControllerConfig,
    pub filter: FilterParams,
    pub outflow: OutflowModel,
    pub perception: PerceptionConfig,
    /// Simulated seconds before a trial is abandoned.
    pub timeout: f64,
    /// Physics steps per control tick.
    pub physics_substeps: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            sensor: SensorModel::default(),
            controller: ControllerConfig::default(),
            filter: FilterParams::default(),
            outflow: OutflowModel::default(),
            perception: PerceptionConfig::default(),
            timeout: 120.0,
            physics_substeps: 4,
        }
    }
}

/// One pour: what is poured, into what, from where, and how far.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub liquid: LiquidSpec,
    pub cup: CupSpec,
    pub bottle: BottleSpec,
    pub initial_volume_ml: f64,
    /// Liquid already in the cup, m.
    pub initial_height: f64,
    /// m.
    pub target_height: f64,
    pub settings: SimSettings,
}

impl Scenario {
    pub fn new(
        liquid: LiquidSpec,
        cup: CupSpec,
        bottle: BottleSpec,
        initial_volume_ml: f64,
        target_height: f64,
    ) -> Self {
        Self {
            liquid,
            cup,
            bottle,
            initial_volume_ml,
            initial_height: 0.0,
            target_height,
            settings: SimSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        if !(self.target_height > self.initial_height && self.target_height <= self.cup.height) {
            return bad(format!(
                "target height {} m must lie above the initial height {} m and within the cup ({} m)",
                self.target_height, self.initial_height, self.cup.height
            ));
        }
        let s = &self.settings;
        if !(s.timeout > 0.0) || s.physics_substeps == 0 {
            return bad("timeout and physics_substeps must be positive".into());
        }
        let p = &s.perception;
        if !(p.plane_margin >= 0.0
            && p.raw_sigma > 0.0
            && p.diameter_scale > 0.0
            && p.diameter_scale < 1.0)
        {
            return bad(format!("invalid perception settings {p:?}"));
        }
        s.sensor.validate()?;
        s.controller.validate()?;
        s.filter.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// True liquid height when the controller finished, m.
    pub final_height: f64,
    pub target_height: f64,
    /// `final_height - target_height`, m.
    pub signed_error: f64,
    /// Positive part of the signed error, m.
    pub overshoot: f64,
    /// Seconds from the first tick to `Done`.
    pub duration: f64,
    /// Phase sequence with consecutive repeats collapsed.
    pub phases: Vec<ControllerPhase>,
    pub commands: Vec<PourCommand>,
    pub peak_flow_ml_s: f64,
    /// True cup height at every tick, m.
    pub height_trace: Vec<f64>,
    /// Largest bottle + cup volume drift seen, ml.
    pub max_conservation_error_ml: f64,
    pub frames: usize,
    pub frames_without_liquid: usize,
    pub seed: u64,
}

/// Scene geometry found on the first frame. The cup does not move during a
/// pour, so it is fitted once.
struct Scene {
    table: PlaneModel,
    cup: CylinderModel,
}

fn perceive_scene(
    world: &WorldState,
    settings: &SimSettings,
    seed: u64,
) -> Result<Scene, GeometryError> {
    let p = &settings.perception;
    let cloud = render_cloud(world, &settings.sensor, seed);
    let ransac = RansacConfig { seed, ..p.ransac };
    let table = fit_plane_ransac_with(&cloud, &ransac, ExecMode::Sequential)?;
    let above = extract_above_plane(&cloud, &table, p.plane_margin);
    let cup = fit_cylinder_ransac_with(&above, &table, &ransac, ExecMode::Sequential)?;
    Ok(Scene { table, cup })
}

/// Height message travelling from perception to the controller.
#[derive(Clone, Copy)]
enum Message {
    Estimate(FilterState),
    NoLiquid,
}

/// Run one pour to completion.
///
/// Every tick renders a frame of the cup interior, measures and corrects the
/// height, filters it and queues the result for delivery `latency` seconds
/// later. The controller acts on the newest delivered message and the world
/// then advances one tick at the commanded angle.
pub fn run_closed_loop(scenario: &Scenario, seed: u64) -> Result<TrialResult, SimError> {
    scenario.validate()?;
    let s = &scenario.settings;
    let mut world = WorldState::new(
        scenario.liquid.clone(),
        scenario.cup.clone(),
        scenario.bottle.clone(),
        scenario.initial_volume_ml,
        scenario.initial_height,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = perceive_scene(&world, s, rng.next_u64())?;

    let mut tracker = Tracker::new(s.filter)?;
    let mut controller = PourController::new(s.controller)?;
    let dt = s.sensor.frame_interval();
    let sub_dt = dt / s.physics_substeps as f64;

    let mut queue: VecDeque<(f64, Message)> = VecDeque::new();
    let mut latest: Option<(f64, Message)> = None;
    let mut stalled_until = f64::NEG_INFINITY;
    let mut commands = Vec::new();
    let mut phases: Vec<ControllerPhase> = Vec::new();
    let mut peak_flow: f64 = 0.0;
    let mut height_trace = Vec::new();
    let mut max_conservation_error: f64 = 0.0;
    let mut frames = 0;
    let mut frames_without_liquid = 0;

    for k in 0u64.. {
        let t = k as f64 * dt;
        if t > s.timeout {
            return Err(SimError::TrialTimeout {
                elapsed: t,
                height_mm: world.cup_height() * 1000.0,
            });
        }

        height_trace.push(world.cup_height());
        max_conservation_error = max_conservation_error.max(world.conservation_error_ml());

        let frame_seed = rng.next_u64();
        let stall_draw: f64 = rng.random();
        if t >= stalled_until {
            if stall_draw < s.sensor.stall_probability {
                stalled_until = t + s.sensor.stall_duration;
            } else {
                frames += 1;
                let mut cloud =
                    render_region(&world, &s.sensor, frame_seed, RenderRegion::CupInterior);
                cloud.frame_id = k;
                cloud.timestamp = t;
                let obs = match measure_raw_height(
                    &cloud,
                    &scene.cup,
                    &scene.table,
                    s.perception.diameter_scale,
                ) {
                    Ok(raw) => FrameObservation::Height(correct_height(
                        &raw,
                        &scenario.liquid,
                        s.perception.raw_sigma,
                    )?),
                    Err(GeometryError::NoLiquidVisible) => {
                        FrameObservation::NoLiquid { timestamp: t }
                    }
                    Err(e) => return Err(e.into()),
                };
                let msg = match (obs, tracker.observe(&obs)?) {
                    (FrameObservation::Height(_), Some(tracked)) => {
                        Message::Estimate(tracked.state)
                    }
                    _ => Message::NoLiquid,
                };
                if matches!(msg, Message::NoLiquid) {
                    frames_without_liquid += 1;
                }
                queue.push_back((t + s.sensor.latency, msg));
            }
        }

        while queue
            .front()
            .is_some_and(|(arrival, _)| *arrival <= t + 1e-9)
        {
            latest = queue.pop_front();
        }
        let observation = match latest {
            Some((arrival, msg)) if t - arrival <= s.controller.stale_timeout => match msg {
                Message::Estimate(state) => Observation::Estimate(state),
                Message::NoLiquid => Observation::NoLiquid,
            },
            _ => Observation::Stale,
        };

        let cmd = controller.step(observation, scenario.target_height, t)?;
        commands.push(cmd);
        if phases.last() != Some(&cmd.phase) {
            phases.push(cmd.phase);
        }
        if cmd.phase == ControllerPhase::Done {
            let final_height = world.cup_height();
            let signed_error = final_height - scenario.target_height;
            return Ok(TrialResult {
                final_height,
                target_height: scenario.target_height,
                signed_error,
                overshoot: signed_error.max(0.0),
                duration: t,
                phases,
                commands,
                peak_flow_ml_s: peak_flow,
                height_trace,
                max_conservation_error_ml: max_conservation_error,
                frames,
                frames_without_liquid,
                seed,
            });
        }

        for _ in 0..s.physics_substeps {
            let rate = s
                .outflow
                .flow_rate(&world.bottle, world.bottle_volume_ml, cmd.wrist_angle);
            peak_flow = peak_flow.max(rate);
            world = step_world(&world, cmd.wrist_angle, sub_dt, &s.outflow);
        }
    }
    unreachable!("tick loop only exits by returning")
}
