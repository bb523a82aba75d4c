//! Liquid descriptions and the refraction correction for transparent liquids.
//!
//! A depth camera looking into a glass of water ranges the cup bottom through
//! the surface, so the liquid appears shallower than it is. For incidence
//! angle `alpha` and refractive index `n` the true height is
//!
//! ```text
//! h = s / (s - cos(alpha)) * h_r,    s = sqrt(n^2 - 1 + cos^2(alpha))
//! ```
//!
//! which reduces to `n / (n - 1)` at normal incidence. Opaque liquids reflect
//! at the surface and need no correction.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RawHeightMeasurement;

/// Indices at or below this are rejected; the correction diverges as n -> 1.
pub const MIN_REFRACTIVE_INDEX: f64 = 1.0 + 1e-6;

/// Default raw measurement standard deviation, meters.
pub const DEFAULT_RAW_SIGMA: f64 = 0.0002;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid refractive index {0}: must exceed 1 + 1e-6")]
    InvalidRefractiveIndex(f64),
    #[error("incidence angle {0} rad outside [0, pi/2)")]
    InvalidIncidenceAngle(f64),
    #[error("invalid liquid `{name}`: {reason}")]
    InvalidLiquid { name: String, reason: String },
    #[error("raw measurement has no supporting points")]
    EmptyMeasurement,
    #[error("unknown liquid preset `{0}`")]
    UnknownLiquid(String),
    #[error("cannot read liquid presets: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opacity {
    Opaque,
    Transparent,
}

/// What is being poured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiquidSpec {
    pub name: String,
    pub opacity: Opacity,
    /// Required for transparent liquids, ignored for opaque ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refractive_index: Option<f64>,
    /// Simulation-only multiplier on surface depth noise (e.g. carbonation).
    #[serde(default = "unit_scale")]
    pub surface_noise_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl LiquidSpec {
    pub fn opaque(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            opacity: Opacity::Opaque,
            refractive_index: None,
            surface_noise_scale: 1.0,
        }
    }

    pub fn transparent(name: &str, refractive_index: f64) -> Self {
        Self {
            name: name.to_owned(),
            opacity: Opacity::Transparent,
            refractive_index: Some(refractive_index),
            surface_noise_scale: 1.0,
        }
    }

    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.surface_noise_scale = scale;
        self
    }

    pub fn is_transparent(&self) -> bool {
        self.opacity == Opacity::Transparent
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let invalid = |reason: String| OpticsError::InvalidLiquid {
            name: self.name.clone(),
            reason,
        };
        if !(self.surface_noise_scale >= 1.0) {
            return Err(invalid(format!(
                "surface noise scale must be >= 1, got {}",
                self.surface_noise_scale
            )));
        }
        if self.is_transparent() {
            match self.refractive_index {
                Some(n) if n > MIN_REFRACTIVE_INDEX => {}
                Some(n) => return Err(OpticsError::InvalidRefractiveIndex(n)),
                None => {
                    return Err(invalid(
                        "transparent liquid needs a refractive index".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Height multiplier at incidence `alpha`: 1 for opaque liquids.
    pub fn height_factor(&self, alpha: f64) -> Result<f64, OpticsError> {
        match (self.opacity, self.refractive_index) {
            (Opacity::Opaque, _) => Ok(1.0),
            (Opacity::Transparent, Some(n)) => correction_factor(n, alpha),
            (Opacity::Transparent, None) => Err(OpticsError::InvalidRefractiveIndex(f64::NAN)),
        }
    }
}

/// The liquids used in the experiments. Indices are textbook values.
pub fn builtin_liquids() -> Vec<LiquidSpec> {
    vec![
        LiquidSpec::transparent("water", 1.333),
        LiquidSpec::transparent("carbonated_water", 1.333).with_noise_scale(2.0),
        LiquidSpec::transparent("olive_oil", 1.47),
        LiquidSpec::opaque("milk"),
        LiquidSpec::opaque("orange_juice"),
    ]
}

/// A named set of liquids, loadable from TOML:
///
/// ```toml
/// [[liquid]]
/// name = "water"
/// opacity = "transparent"
/// refractive_index = 1.333
/// surface_noise_scale = 1.0
///
/// [[liquid]]
/// name = "milk"
/// opacity = "opaque"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidLibrary {
    #[serde(rename = "liquid", default)]
    pub liquids: Vec<LiquidSpec>,
}

impl Default for LiquidLibrary {
    fn default() -> Self {
        Self {
            liquids: builtin_liquids(),
        }
    }
}

impl LiquidLibrary {
    pub fn from_toml_str(s: &str) -> Result<Self, OpticsError> {
        let lib: Self = toml::from_str(s).map_err(|e| OpticsError::Config(e.to_string()))?;
        for l in &lib.liquids {
            l.validate()?;
        }
        Ok(lib)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OpticsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OpticsError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&LiquidSpec, OpticsError> {
        self.liquids
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| OpticsError::UnknownLiquid(name.to_owned()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("liquid library serializes")
    }
}

/// Multiplicative term mapping raw height to true height.
pub fn correction_factor(n_l: f64, alpha: f64) -> Result<f64, OpticsError> {
    if !(n_l > MIN_REFRACTIVE_INDEX) {
        return Err(OpticsError::InvalidRefractiveIndex(n_l));
    }
    if !(0.0..FRAC_PI_2).contains(&alpha) {
        return Err(OpticsError::InvalidIncidenceAngle(alpha));
    }
    let c = alpha.cos();
    let s = (n_l * n_l - 1.0 + c * c).sqrt();
    Ok(s / (s - c))
}

/// Where a height estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    /// Transparent liquid, refraction-corrected.
    Corrected,
    /// Opaque liquid, raw height used as-is.
    Direct,
}

/// True liquid height above the inner cup bottom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightEstimate {
    pub h: f64,
    /// m^2.
    pub variance: f64,
    pub timestamp: f64,
    pub source: EstimateSource,
}

/// Turn a raw measurement into a height estimate. The variance is the raw
/// variance `raw_sigma^2` scaled by the square of the correction factor, so
/// transparent liquids report proportionally noisier heights.
pub fn correct_height(
    raw: &RawHeightMeasurement,
    liquid: &LiquidSpec,
    raw_sigma: f64,
) -> Result<HeightEstimate, OpticsError> {
    if raw.point_count == 0 {
        return Err(OpticsError::EmptyMeasurement);
    }
    let (factor, source) = match liquid.opacity {
        Opacity::Opaque => (1.0, EstimateSource::Direct),
        Opacity::Transparent => (liquid.height_factor(raw.alpha)?, EstimateSource::Corrected),
    };
    Ok(HeightEstimate {
        h: factor * raw.h_r,
        variance: factor * factor * raw_sigma * raw_sigma,
        timestamp: raw.timestamp,
        source,
    })
}
