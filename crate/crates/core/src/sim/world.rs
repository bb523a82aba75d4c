use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::optics::LiquidSpec;

/// Cylindrical cup with a flat bottom level with the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CupSpec {
    pub name: String,
    /// Meters.
    pub inner_radius: f64,
    /// Meters.
    pub height: f64,
}

impl CupSpec {
    pub fn new(name: &str, inner_radius: f64, height: f64) -> Self {
        Self {
            name: name.to_owned(),
            inner_radius,
            height,
        }
    }

    /// 5 cm across.
    pub fn text() -> Self {
        Self::new("text", 0.025, 0.105)
    }

    /// 6 cm across.
    pub fn patterned() -> Self {
        Self::new("patterned", 0.030, 0.095)
    }

    /// 7.5 cm across.
    pub fn blue() -> Self {
        Self::new("blue", 0.0375, 0.100)
    }

    /// Cross-section area, m^2.
    pub fn area(&self) -> f64 {
        PI * self.inner_radius * self.inner_radius
    }

    pub fn volume_ml(&self, height: f64) -> f64 {
        self.area() * height * 1e6
    }

    pub fn height_for_volume(&self, volume_ml: f64) -> f64 {
        volume_ml * 1e-6 / self.area()
    }

    pub fn capacity_ml(&self) -> f64 {
        self.volume_ml(self.height)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.inner_radius > 0.0 && self.height > 0.0 {
            Ok(())
        } else {
            Err(SimError::InvalidScenario(format!(
                "cup `{}` needs positive radius and height",
                self.name
            )))
        }
    }
}

pub fn builtin_cups() -> Vec<CupSpec> {
    vec![CupSpec::text(), CupSpec::patterned(), CupSpec::blue()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleSpec {
    pub name: String,
    /// Meters.
    pub opening_diameter: f64,
    pub capacity_ml: f64,
}

impl BottleSpec {
    pub fn new(name: &str, opening_diameter: f64, capacity_ml: f64) -> Self {
        Self {
            name: name.to_owned(),
            opening_diameter,
            capacity_ml,
        }
    }

    /// The 2.5 cm opening bottle.
    pub fn small() -> Self {
        Self::new("small", 0.025, 750.0)
    }

    /// The 4.5 cm opening bottle.
    pub fn wide() -> Self {
        Self::new("wide", 0.045, 750.0)
    }

    /// Opening area, cm^2.
    pub fn opening_area_cm2(&self) -> f64 {
        let r_cm = self.opening_diameter * 50.0;
        PI * r_cm * r_cm
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.opening_diameter > 0.0 && self.capacity_ml > 0.0 {
            Ok(())
        } else {
            Err(SimError::InvalidScenario(format!(
                "bottle `{}` needs positive opening and capacity",
                self.name
            )))
        }
    }
}

pub fn builtin_bottles() -> Vec<BottleSpec> {
    vec![BottleSpec::small(), BottleSpec::wide()]
}

/// Parametric outflow: `rate = coefficient * area * max(0, tilt - onset)^exponent`.
///
/// `onset` is the tilt at which liquid reaches the lip. It grows linearly from
/// `onset_full` (full bottle) to `onset_empty` (empty bottle), so a draining
/// bottle has to be tilted further to keep pouring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutflowModel {
    /// ml/s per cm^2 of opening per rad^exponent.
    pub coefficient: f64,
    pub exponent: f64,
    /// Radians.
    pub onset_full: f64,
    /// Radians.
    pub onset_empty: f64,
}

impl Default for OutflowModel {
    fn default() -> Self {
        Self {
            coefficient: 6.0,
            exponent: 2.0,
            onset_full: 0.1,
            onset_empty: 1.9,
        }
    }
}

impl OutflowModel {
    pub fn onset_angle(&self, fill_fraction: f64) -> f64 {
        let empty = 1.0 - fill_fraction.clamp(0.0, 1.0);
        self.onset_full + (self.onset_empty - self.onset_full) * empty
    }

    /// ml/s.
    pub fn flow_rate(&self, bottle: &BottleSpec, bottle_volume_ml: f64, tilt: f64) -> f64 {
        if bottle_volume_ml <= 0.0 {
            return 0.0;
        }
        let excess = tilt - self.onset_angle(bottle_volume_ml / bottle.capacity_ml);
        if excess <= 0.0 {
            return 0.0;
        }
        self.coefficient * bottle.opening_area_cm2() * excess.powf(self.exponent)
    }

    /// Tilt giving `rate` ml/s at the given bottle volume.
    pub fn tilt_for_rate(&self, bottle: &BottleSpec, bottle_volume_ml: f64, rate: f64) -> f64 {
        let onset = self.onset_angle(bottle_volume_ml / bottle.capacity_ml);
        onset + (rate / (self.coefficient * bottle.opening_area_cm2())).powf(1.0 / self.exponent)
    }
}

/// Ground truth of the simulated scene. Liquid is tracked as volumes so
/// that bottle + cup is conserved to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub liquid: LiquidSpec,
    pub cup: CupSpec,
    pub bottle: BottleSpec,
    pub bottle_volume_ml: f64,
    pub cup_volume_ml: f64,
    pub initial_total_ml: f64,
    pub wrist_angle: f64,
    pub time: f64,
}

impl WorldState {
    pub fn new(
        liquid: LiquidSpec,
        cup: CupSpec,
        bottle: BottleSpec,
        bottle_volume_ml: f64,
        cup_height: f64,
    ) -> Result<Self, SimError> {
        cup.validate()?;
        bottle.validate()?;
        liquid
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        if !(bottle_volume_ml >= 0.0 && bottle_volume_ml <= bottle.capacity_ml) {
            return Err(SimError::InvalidScenario(format!(
                "bottle volume {bottle_volume_ml} ml outside [0, {}]",
                bottle.capacity_ml
            )));
        }
        if !(cup_height >= 0.0 && cup_height <= cup.height) {
            return Err(SimError::InvalidScenario(format!(
                "initial cup height {cup_height} m outside [0, {}]",
                cup.height
            )));
        }
        let cup_volume_ml = cup.volume_ml(cup_height);
        Ok(Self {
            liquid,
            cup,
            bottle,
            bottle_volume_ml,
            cup_volume_ml,
            initial_total_ml: bottle_volume_ml + cup_volume_ml,
            wrist_angle: 0.0,
            time: 0.0,
        })
    }

    /// True liquid height in the cup, m.
    pub fn cup_height(&self) -> f64 {
        self.cup.height_for_volume(self.cup_volume_ml)
    }

    pub fn conservation_error_ml(&self) -> f64 {
        (self.bottle_volume_ml + self.cup_volume_ml - self.initial_total_ml).abs()
    }
}

/// Advance the world by `dt` with the wrist held at `wrist_angle`. Everything
/// that leaves the bottle lands in the cup, limited by what the bottle holds
/// and what the cup can take.
pub fn step_world(
    state: &WorldState,
    wrist_angle: f64,
    dt: f64,
    outflow: &OutflowModel,
) -> WorldState {
    let rate = outflow.flow_rate(&state.bottle, state.bottle_volume_ml, wrist_angle);
    let room = (state.cup.capacity_ml() - state.cup_volume_ml).max(0.0);
    let moved = (rate * dt).min(state.bottle_volume_ml).min(room).max(0.0);
    let mut next = state.clone();
    next.bottle_volume_ml -= moved;
    next.cup_volume_ml += moved;
    next.wrist_angle = wrist_angle;
    next.time += dt;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn world(volume: f64) -> WorldState {
        WorldState::new(
            LiquidSpec::opaque("milk"),
            CupSpec::blue(),
            BottleSpec::small(),
            volume,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn below_onset_nothing_moves() {
        let w = world(400.0);
        let next = step_world(&w, 0.3, 1.0, &OutflowModel::default());
        assert_eq!(next.bottle_volume_ml, 400.0);
        assert_eq!(next.cup_volume_ml, 0.0);
        assert_eq!(next.time, 1.0);
    }

    #[test]
    fn twenty_ml_in_the_blue_cup() {
        let w = world(400.0);
        let model = OutflowModel::default();
        let tilt = model.tilt_for_rate(&w.bottle, 400.0, 20.0);
        let next = step_world(&w, tilt, 1.0, &model);
        let rise = next.cup_height() - w.cup_height();
        // 20 ml / (pi * 37.5 mm^2)
        let expected = 20e-6 / (PI * 0.0375 * 0.0375);
        assert!((rise - expected).abs() < 1e-12);
        assert!((rise * 1000.0 - 4.527).abs() < 1e-3);
    }

    #[test]
    fn wider_opening_pours_faster() {
        let m = OutflowModel::default();
        for tilt in [1.0, 1.2, 1.5] {
            let small = m.flow_rate(&BottleSpec::small(), 400.0, tilt);
            let wide = m.flow_rate(&BottleSpec::wide(), 400.0, tilt);
            assert!(wide > small && small > 0.0);
        }
    }

    #[test]
    fn emptier_bottle_needs_more_tilt() {
        let m = OutflowModel::default();
        let b = BottleSpec::small();
        assert!(m.flow_rate(&b, 500.0, 1.2) > m.flow_rate(&b, 300.0, 1.2));
        assert_eq!(m.flow_rate(&b, 0.0, 2.5), 0.0);
    }

    #[test]
    fn rejects_bad_initial_state() {
        assert!(WorldState::new(
            LiquidSpec::opaque("milk"),
            CupSpec::blue(),
            BottleSpec::small(),
            900.0,
            0.0
        )
        .is_err());
        assert!(WorldState::new(
            LiquidSpec::opaque("milk"),
            CupSpec::blue(),
            BottleSpec::small(),
            400.0,
            0.2
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn conservation_and_monotone_height(angles in prop::collection::vec(0.0f64..2.4, 1..200), vol in 0.0f64..750.0) {
            let model = OutflowModel::default();
            let mut w = world(vol);
            for a in angles {
                let next = step_world(&w, a, 0.05, &model);
                prop_assert!(next.conservation_error_ml() < 1e-9);
                prop_assert!(next.cup_height() >= w.cup_height());
                prop_assert!(next.cup_height() <= next.cup.height + 1e-12);
                prop_assert!(next.bottle_volume_ml >= 0.0);
                w = next;
            }
        }
    }
}
