//! Constant-velocity Kalman filter over liquid height.
//!
//! State is `[h, h_dot]`. Only the height is observed (`H = [1, 0]`); the fill
//! rate is inferred. Process noise is the continuous white-acceleration model
//! with spectral density `q`. There is deliberately no control input: the
//! outflow depends on bottle fill, opening and tilt in ways that do not
//! transfer between setups.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::HeightEstimate;

/// Prior standard deviation of the fill rate at initialization, m/s.
const INITIAL_RATE_SIGMA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
    #[error("timestamp {got} precedes previous {previous}")]
    NonMonotonicTimestamp { previous: f64, got: f64 },
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Process noise spectral density, m^2/s^3.
    pub q: f64,
    /// Fallback measurement variance, m^2.
    pub r: f64,
    /// Nominal frame interval, seconds.
    pub dt_default: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            q: 1e-6,
            r: 0.0005 * 0.0005,
            dt_default: 1.0 / 30.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.q > 0.0 && self.r > 0.0 && self.dt_default > 0.0 {
            Ok(())
        } else {
            Err(TrackingError::InvalidParams(format!(
                "q, r and dt_default must be positive (q={}, r={}, dt={})",
                self.q, self.r, self.dt_default
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// `[h, h_dot]` in m and m/s.
    pub x: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    /// Time the state refers to, seconds.
    pub last_update: f64,
}

impl FilterState {
    pub fn h(&self) -> f64 {
        self.x[0]
    }

    pub fn h_dot(&self) -> f64 {
        self.x[1]
    }

    /// Seed from a first measurement: height with the measurement variance,
    /// zero rate with a broad prior.
    pub fn from_measurement(z: &HeightEstimate, params: &FilterParams) -> Self {
        Self {
            x: Vector2::new(z.h, 0.0),
            covariance: Matrix2::new(
                measurement_variance(z, params),
                0.0,
                0.0,
                INITIAL_RATE_SIGMA * INITIAL_RATE_SIGMA,
            ),
            last_update: z.timestamp,
        }
    }
}

/// Discrete process noise for an interval `dt`.
pub fn process_noise(q: f64, dt: f64) -> Matrix2<f64> {
    let dt2 = dt * dt;
    q * Matrix2::new(dt2 * dt / 3.0, dt2 / 2.0, dt2 / 2.0, dt)
}

fn transition(dt: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, dt, 0.0, 1.0)
}

fn measurement_variance(z: &HeightEstimate, params: &FilterParams) -> f64 {
    if z.variance > 0.0 && z.variance.is_finite() {
        z.variance
    } else {
        params.r
    }
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

pub fn predict(
    state: &FilterState,
    dt: f64,
    params: &FilterParams,
) -> Result<FilterState, TrackingError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(TrackingError::InvalidDt(dt));
    }
    let f = transition(dt);
    Ok(FilterState {
        x: f * state.x,
        covariance: symmetrize(f * state.covariance * f.transpose() + process_noise(params.q, dt)),
        last_update: state.last_update + dt,
    })
}

/// Measurement update with `H = [1, 0]`. The measurement variance comes from
/// the estimate when it carries one, otherwise from `params.r`. Joseph form
/// keeps the covariance symmetric positive semi-definite.
pub fn update(state: &FilterState, z: &HeightEstimate, params: &FilterParams) -> FilterState {
    let r = measurement_variance(z, params);
    let h = RowVector2::new(1.0, 0.0);
    let p = state.covariance;
    let s = p[(0, 0)] + r;
    let k = Vector2::new(p[(0, 0)], p[(1, 0)]) / s;
    let innovation = z.h - state.x[0];
    let i_kh = Matrix2::identity() - k * h;
    FilterState {
        x: state.x + k * innovation,
        covariance: symmetrize(i_kh * p * i_kh.transpose() + k * r * k.transpose()),
        last_update: state.last_update,
    }
}

/// One observation in a height stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameObservation {
    Height(HeightEstimate),
    /// The frame at `timestamp` showed no liquid surface.
    NoLiquid {
        timestamp: f64,
    },
}

impl FrameObservation {
    pub fn timestamp(&self) -> f64 {
        match self {
            Self::Height(z) => z.timestamp,
            Self::NoLiquid { timestamp } => *timestamp,
        }
    }
}

/// Filter output for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedState {
    pub state: FilterState,
    /// False for predict-only steps across frames without a measurement.
    pub measured: bool,
}

/// Stateful wrapper: predict over the real inter-frame interval, then update.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: FilterParams,
    state: Option<FilterState>,
    last_time: Option<f64>,
}

impl Tracker {
    pub fn new(params: FilterParams) -> Result<Self, TrackingError> {
        params.validate()?;
        Ok(Self {
            params,
            state: None,
            last_time: None,
        })
    }

    pub fn state(&self) -> Option<&FilterState> {
        self.state.as_ref()
    }

    /// Feed one observation. Returns `None` for gaps before the first
    /// measurement.
    pub fn observe(
        &mut self,
        obs: &FrameObservation,
    ) -> Result<Option<TrackedState>, TrackingError> {
        let t = obs.timestamp();
        if let Some(prev) = self.last_time {
            if t < prev {
                return Err(TrackingError::NonMonotonicTimestamp {
                    previous: prev,
                    got: t,
                });
            }
        }
        self.last_time = Some(t);

        let next = match (self.state, obs) {
            (None, FrameObservation::NoLiquid { .. }) => return Ok(None),
            (None, FrameObservation::Height(z)) => TrackedState {
                state: FilterState::from_measurement(z, &self.params),
                measured: true,
            },
            (Some(s), obs) => {
                let dt = t - s.last_update;
                let prior = if dt > 0.0 {
                    predict(&s, dt, &self.params)?
                } else {
                    s
                };
                match obs {
                    FrameObservation::Height(z) => TrackedState {
                        state: update(&prior, z, &self.params),
                        measured: true,
                    },
                    FrameObservation::NoLiquid { .. } => TrackedState {
                        state: prior,
                        measured: false,
                    },
                }
            }
        };
        self.state = Some(next.state);
        Ok(Some(next))
    }
}

/// Run a whole stream through a fresh [`Tracker`].
pub fn track<'a, I>(
    observations: I,
    params: &FilterParams,
) -> Result<Vec<TrackedState>, TrackingError>
where
    I: IntoIterator<Item = &'a FrameObservation>,
{
    let mut tracker = Tracker::new(*params)?;
    let mut out = Vec::new();
    for obs in observations {
        if let Some(s) = tracker.observe(obs)? {
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::EstimateSource;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn z(h: f64, variance: f64, t: f64) -> HeightEstimate {
        HeightEstimate {
            h,
            variance,
            timestamp: t,
            source: EstimateSource::Direct,
        }
    }

    fn state(h: f64, h_dot: f64, p: Matrix2<f64>) -> FilterState {
        FilterState {
            x: Vector2::new(h, h_dot),
            covariance: p,
            last_update: 0.0,
        }
    }

    #[test]
    fn constant_velocity_prediction() {
        let s = state(0.010, 0.005, Matrix2::zeros());
        let p = predict(&s, 1.0, &FilterParams::default()).unwrap();
        assert!((p.h() - 0.015).abs() < 1e-15);
        assert_eq!(p.h_dot(), 0.005);
        assert_eq!(p.last_update, 1.0);
    }

    #[test]
    fn zero_covariance_gains_process_noise() {
        let params = FilterParams {
            q: 2e-6,
            ..FilterParams::default()
        };
        let p = predict(&state(0.0, 0.0, Matrix2::zeros()), 1.0, &params).unwrap();
        let expected: Matrix2<f64> = 2e-6 * Matrix2::new(1.0 / 3.0, 0.5, 0.5, 1.0);
        assert!((p.covariance - expected).abs().max() < 1e-20);
    }

    #[test]
    fn split_prediction_matches_single_when_noise_free() {
        // q is clamped positive by validation but predict itself takes any q.
        let params = FilterParams {
            q: 0.0,
            ..FilterParams::default()
        };
        let s = state(0.02, -0.003, Matrix2::new(4e-6, 1e-7, 1e-7, 2e-6));
        let once = predict(&s, 0.8, &params).unwrap();
        let twice = predict(&predict(&s, 0.4, &params).unwrap(), 0.4, &params).unwrap();
        assert!((once.x - twice.x).abs().max() < 1e-15);
        assert!((once.covariance - twice.covariance).abs().max() < 1e-18);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let s = state(0.0, 0.0, Matrix2::identity());
        for dt in [0.0, -0.1, f64::NAN] {
            assert!(matches!(
                predict(&s, dt, &FilterParams::default()),
                Err(TrackingError::InvalidDt(_))
            ));
        }
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let prior = state(0.05, 0.001, Matrix2::new(4e-6, 0.0, 0.0, 1e-6));
        let post = update(&prior, &z(0.2, 1e12, 0.0), &FilterParams::default());
        assert!((post.h() - prior.h()).abs() < 1e-9);
    }

    #[test]
    fn uninformative_prior_takes_measurement() {
        let prior = state(0.0, 0.0, Matrix2::new(1e12, 0.0, 0.0, 1.0));
        let post = update(&prior, &z(0.042, 4e-6, 0.0), &FilterParams::default());
        assert!((post.h() - 0.042).abs() < 1e-9);
    }

    #[test]
    fn equal_variances_split_the_difference() {
        let prior = state(0.050, 0.0, Matrix2::new(4e-6, 0.0, 0.0, 1e-6));
        let post = update(&prior, &z(0.054, 4e-6, 0.0), &FilterParams::default());
        assert!((post.h() - 0.052).abs() < 1e-12);
        assert!((post.covariance[(0, 0)] - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn missing_variance_falls_back_to_r() {
        let params = FilterParams {
            r: 4e-6,
            ..FilterParams::default()
        };
        let prior = state(0.050, 0.0, Matrix2::new(4e-6, 0.0, 0.0, 1e-6));
        let post = update(&prior, &z(0.054, 0.0, 0.0), &params);
        assert!((post.h() - 0.052).abs() < 1e-12);
    }

    fn frames(values: impl IntoIterator<Item = f64>, variance: f64) -> Vec<FrameObservation> {
        values
            .into_iter()
            .enumerate()
            .map(|(i, h)| FrameObservation::Height(z(h, variance, i as f64 / 30.0)))
            .collect()
    }

    #[test]
    fn converges_on_constant_height() {
        let out = track(
            &frames(std::iter::repeat_n(0.03, 30), 2.5e-7),
            &FilterParams::default(),
        )
        .unwrap();
        let last = out.last().unwrap().state;
        assert!((last.h() - 0.03).abs() < 1e-4);
        assert!(last.h_dot().abs() < 5e-4);
    }

    #[test]
    fn learns_ramp_rate() {
        let out = track(
            &frames((0..90).map(|i| i as f64 * 0.001), 2.5e-7),
            &FilterParams::default(),
        )
        .unwrap();
        let rate = out.last().unwrap().state.h_dot();
        assert!((rate - 0.030).abs() < 0.003, "rate {rate}");
    }

    #[test]
    fn empty_stream() {
        assert!(track(&[], &FilterParams::default()).unwrap().is_empty());
    }

    #[test]
    fn gaps_predict_only() {
        let obs = vec![
            FrameObservation::NoLiquid { timestamp: 0.0 },
            FrameObservation::Height(z(0.01, 1e-8, 0.1)),
            FrameObservation::NoLiquid { timestamp: 0.2 },
            FrameObservation::Height(z(0.012, 1e-8, 0.3)),
        ];
        let out = track(&obs, &FilterParams::default()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(
            out.iter().map(|s| s.measured).collect::<Vec<_>>(),
            vec![true, false, true]
        );
        assert_eq!(out[1].state.last_update, 0.2);
        assert!(out[1].state.covariance[(0, 0)] > out[0].state.covariance[(0, 0)]);
    }

    #[test]
    fn rejects_time_reversal() {
        let obs = vec![
            FrameObservation::Height(z(0.01, 1e-8, 1.0)),
            FrameObservation::Height(z(0.01, 1e-8, 0.5)),
        ];
        assert!(matches!(
            track(&obs, &FilterParams::default()),
            Err(TrackingError::NonMonotonicTimestamp { .. })
        ));
    }

    #[test]
    fn time_origin_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 5e-4).unwrap();
        let values: Vec<f64> = (0..60)
            .map(|i| 0.02 + 0.0005 * i as f64 + noise.sample(&mut rng))
            .collect();
        let base = frames(values.iter().copied(), 2.5e-7);
        let shifted: Vec<_> = base
            .iter()
            .map(|o| match o {
                FrameObservation::Height(e) => FrameObservation::Height(HeightEstimate {
                    timestamp: e.timestamp + 1000.0,
                    ..*e
                }),
                other => *other,
            })
            .collect();
        let a = track(&base, &FilterParams::default()).unwrap();
        let b = track(&shifted, &FilterParams::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.state.x - y.state.x).abs().max() < 1e-9);
        }
    }

    #[test]
    fn static_error_shrinks_like_root_n() {
        // Endpoint error of a line fit has std ~2 sigma / sqrt(N); the RMS
        // over seeds must sit inside 3 sigma / sqrt(N).
        let sigma: f64 = 5e-4;
        let n = 1000;
        let params = FilterParams {
            q: 1e-15,
            r: sigma * sigma,
            ..FilterParams::default()
        };
        let mut sq = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, sigma).unwrap();
            let out = track(
                &frames((0..n).map(|_| 0.04 + noise.sample(&mut rng)), sigma * sigma),
                &params,
            )
            .unwrap();
            sq += (out.last().unwrap().state.h() - 0.04).powi(2);
        }
        let rms = (sq / seeds as f64).sqrt();
        assert!(rms < 3.0 * sigma / (n as f64).sqrt(), "rms {rms}");
    }

    fn is_sym_psd(p: &Matrix2<f64>) -> bool {
        let scale = p.abs().max().max(1e-300);
        let sym = (p[(0, 1)] - p[(1, 0)]).abs() <= 1e-9 * scale;
        let eig = p.symmetric_eigenvalues();
        sym && eig.iter().all(|&e| e >= -1e-9 * scale)
    }

    proptest! {
        #[test]
        fn covariance_stays_psd(ops in prop::collection::vec((any::<bool>(), 1e-4f64..2.0, -0.1f64..0.2, 1e-10f64..1e-2), 1..60)) {
            let params = FilterParams::default();
            let mut s = FilterState::from_measurement(&z(0.0, 1e-6, 0.0), &params);
            for (is_update, dt, h, var) in ops {
                if is_update {
                    let before = s.covariance[(0, 0)];
                    s = update(&s, &z(h, var, s.last_update), &params);
                    prop_assert!(s.covariance[(0, 0)] <= before * (1.0 + 1e-12));
                } else {
                    s = predict(&s, dt, &params).unwrap();
                }
                prop_assert!(is_sym_psd(&s.covariance));
            }
        }

        #[test]
        fn posterior_between_prior_and_measurement(h0 in -0.1f64..0.1, zh in -0.1f64..0.1, p00 in 1e-10f64..1.0, var in 1e-10f64..1.0) {
            let prior = state(h0, 0.0, Matrix2::new(p00, 0.0, 0.0, 1e-6));
            let post = update(&prior, &z(zh, var, 0.0), &FilterParams::default());
            let (lo, hi) = if h0 < zh { (h0, zh) } else { (zh, h0) };
            prop_assert!(post.h() >= lo - 1e-15 && post.h() <= hi + 1e-15);
        }
    }
}
