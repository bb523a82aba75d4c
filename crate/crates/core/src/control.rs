//! Pour controller.
//!
//! Proportional control on the height error, shaped by three policies:
//!
//! * no liquid detected: keep tilting, but at the slow rate;
//! * no fresh estimate (stale): hold the wrist angle;
//! * target reached: rotate back to the home angle, then stop for good.
//!
//! The proportional term sets the tilt *rate*: `kp * (target - h)`, clamped to
//! `[0, max_rate]`, integrated into the commanded wrist angle. A bottle keeps
//! pouring only while it is tilted further as it empties, so an angle that
//! relaxes back toward home as the error shrinks stalls below the target.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracking::FilterState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("target height must be positive, got {0}")]
    InvalidTarget(f64),
    #[error("controller time went backwards: {now} < {previous}")]
    TimeWentBackwards { previous: f64, now: f64 },
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Tilt rate per meter of height error, rad/(m s).
    pub kp: f64,
    pub max_angle: f64,
    /// Home wrist angle; the bottle returns here when done.
    pub min_angle: f64,
    pub max_rate: f64,
    pub stale_timeout: f64,
    pub slow_rate: f64,
    pub return_rate: f64,
    /// Stop once the estimate is within this distance of the target, m.
    pub stop_epsilon: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: 3.0,
            max_angle: 2.4,
            min_angle: 0.0,
            max_rate: 0.3,
            stale_timeout: 0.25,
            slow_rate: 0.02,
            return_rate: 1.0,
            stop_epsilon: 0.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidConfig(m.to_owned()));
        if !(self.kp > 0.0) {
            return bad("kp must be positive");
        }
        if !(self.min_angle < self.max_angle) {
            return bad("min_angle must be below max_angle");
        }
        if !(self.max_rate > 0.0 && self.slow_rate > 0.0 && self.return_rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.stale_timeout > 0.0) {
            return bad("stale_timeout must be positive");
        }
        if !(self.stop_epsilon >= 0.0) {
            return bad("stop_epsilon must be non-negative");
        }
        Ok(())
    }

    /// Largest angular speed any phase may command.
    pub fn max_slew(&self) -> f64 {
        self.max_rate.max(self.slow_rate).max(self.return_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerPhase {
    Pouring,
    SlowedNoDetection,
    HoldStale,
    Returning,
    Done,
}

impl ControllerPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pouring => "pouring",
            Self::SlowedNoDetection => "slowed_no_detection",
            Self::HoldStale => "hold_stale",
            Self::Returning => "returning",
            Self::Done => "done",
        }
    }

    /// Still allowed to pour.
    pub fn is_active(self) -> bool {
        matches!(
            self,
            Self::Pouring | Self::SlowedNoDetection | Self::HoldStale
        )
    }
}

impl fmt::Display for ControllerPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the controller knows at a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Estimate(FilterState),
    /// Latest frame had no liquid in the search region.
    NoLiquid,
    /// No update within the stale timeout.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PourCommand {
    pub wrist_angle: f64,
    pub phase: ControllerPhase,
    pub timestamp: f64,
}

#[derive(Debug, Clone)]
pub struct PourController {
    cfg: ControllerConfig,
    angle: f64,
    phase: ControllerPhase,
    last_time: Option<f64>,
}

impl PourController {
    pub fn new(cfg: ControllerConfig) -> Result<Self, ControlError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            angle: cfg.min_angle,
            phase: ControllerPhase::Pouring,
            last_time: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn phase(&self) -> ControllerPhase {
        self.phase
    }

    pub fn step(
        &mut self,
        obs: Observation,
        target_h: f64,
        now: f64,
    ) -> Result<PourCommand, ControlError> {
        if !(target_h > 0.0) {
            return Err(ControlError::InvalidTarget(target_h));
        }
        if let Some(prev) = self.last_time {
            if now < prev {
                return Err(ControlError::TimeWentBackwards {
                    previous: prev,
                    now,
                });
            }
        }
        let dt = now - self.last_time.unwrap_or(now);
        self.last_time = Some(now);
        let cfg = &self.cfg;

        match self.phase {
            ControllerPhase::Done => {}
            ControllerPhase::Returning => {
                if self.angle <= cfg.min_angle {
                    self.angle = cfg.min_angle;
                    self.phase = ControllerPhase::Done;
                } else {
                    self.angle = (self.angle - cfg.return_rate * dt).max(cfg.min_angle);
                }
            }
            _ => match obs {
                Observation::Estimate(s) if s.h() >= target_h - cfg.stop_epsilon => {
                    self.phase = ControllerPhase::Returning;
                    self.angle = (self.angle - cfg.return_rate * dt).max(cfg.min_angle);
                }
                Observation::Estimate(s) => {
                    let rate = (cfg.kp * (target_h - s.h())).clamp(0.0, cfg.max_rate);
                    self.phase = ControllerPhase::Pouring;
                    self.angle = (self.angle + rate * dt).min(cfg.max_angle);
                }
                Observation::NoLiquid => {
                    self.phase = ControllerPhase::SlowedNoDetection;
                    self.angle = (self.angle + cfg.slow_rate * dt).min(cfg.max_angle);
                }
                Observation::Stale => {
                    self.phase = ControllerPhase::HoldStale;
                }
            },
        }

        Ok(PourCommand {
            wrist_angle: self.angle,
            phase: self.phase,
            timestamp: now,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSummary {
    /// Last height estimate the controller saw, m.
    pub final_estimate: Option<f64>,
    pub commands_issued: usize,
    pub time_to_done: Option<f64>,
    /// False when the stream ended before the controller finished.
    pub completed: bool,
}

/// Drive a controller from a timestamped observation stream until it is done
/// or the stream runs out.
pub fn run_loop<I>(
    stream: I,
    target_h: f64,
    cfg: &ControllerConfig,
) -> Result<(Vec<PourCommand>, LoopSummary), ControlError>
where
    I: IntoIterator<Item = (f64, Observation)>,
{
    let mut ctrl = PourController::new(*cfg)?;
    let mut commands = Vec::new();
    let mut final_estimate = None;
    let mut time_to_done = None;
    for (t, obs) in stream {
        let cmd = ctrl.step(obs, target_h, t)?;
        if let Observation::Estimate(s) = obs {
            final_estimate = Some(s.h());
        }
        commands.push(cmd);
        if cmd.phase == ControllerPhase::Done {
            time_to_done = Some(t);
            break;
        }
    }
    let summary = LoopSummary {
        final_estimate,
        commands_issued: commands.len(),
        time_to_done,
        completed: time_to_done.is_some(),
    };
    Ok((commands, summary))
}

/// CSV log with columns `timestamp,phase,wrist_angle_rad`.
pub fn write_command_log<W: Write>(writer: W, commands: &[PourCommand]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "phase", "wrist_angle_rad"])?;
    for c in commands {
        w.write_record([
            format!("{:.4}", c.timestamp),
            c.phase.to_string(),
            format!("{:.6}", c.wrist_angle),
        ])?;
    }
    w.flush()?;
    Ok(())
}
