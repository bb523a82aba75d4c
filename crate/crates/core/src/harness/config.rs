//! TOML scenario and plan files.
//!
//! A scenario file describes one pour:
//!
//! ```toml
//! liquid = "water"
//! cup = "blue"
//! bottle = "small"
//! init_volume_ml = 400
//! prefill_mm = 0
//! target_mm = 40
//! seed = 7
//!
//! [settings.sensor]
//! latency = 0.1
//! ```
//!
//! A plan file names a family and either lists trials explicitly
//! (`[[trial]]` tables with the scenario keys above) or leaves them out to get
//! the family's standard design with `trials_per_group` and `seed`. Both may
//! point `liquid_file` at a liquid preset file whose entries extend the
//! built-in presets; relative paths resolve against the referencing file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    ExperimentPlan, Family, HarnessError, TrialSpec, DEFAULT_PLAN_SEED, DEFAULT_TRIALS_PER_GROUP,
};
use crate::optics::{builtin_liquids, LiquidLibrary, LiquidSpec};
use crate::sim::{builtin_bottles, builtin_cups, BottleSpec, CupSpec, Scenario, SimSettings};

/// Named liquids, cups and bottles available to config files.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub liquids: Vec<LiquidSpec>,
    pub cups: Vec<CupSpec>,
    pub bottles: Vec<BottleSpec>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self {
            liquids: builtin_liquids(),
            cups: builtin_cups(),
            bottles: builtin_bottles(),
        }
    }
}

impl Catalog {
    /// Add presets; entries replace built-ins of the same name.
    pub fn with_liquids(mut self, extra: LiquidLibrary) -> Self {
        for l in extra.liquids {
            self.liquids.retain(|x| x.name != l.name);
            self.liquids.push(l);
        }
        self
    }

    pub fn with_liquid_file(self, path: &Path) -> Result<Self, HarnessError> {
        Ok(self.with_liquids(LiquidLibrary::load(path)?))
    }

    pub fn liquid(&self, name: &str) -> Result<&LiquidSpec, HarnessError> {
        find(&self.liquids, name, |l| &l.name, "liquid")
    }

    pub fn cup(&self, name: &str) -> Result<&CupSpec, HarnessError> {
        find(&self.cups, name, |c| &c.name, "cup")
    }

    pub fn bottle(&self, name: &str) -> Result<&BottleSpec, HarnessError> {
        find(&self.bottles, name, |b| &b.name, "bottle")
    }
}

fn find<'a, T>(
    items: &'a [T],
    name: &str,
    key: impl Fn(&T) -> &String,
    kind: &'static str,
) -> Result<&'a T, HarnessError> {
    items
        .iter()
        .find(|x| key(x) == name)
        .ok_or_else(|| HarnessError::UnknownPreset {
            kind,
            name: name.to_owned(),
        })
}

fn default_cup() -> String {
    "blue".into()
}

fn default_bottle() -> String {
    "small".into()
}

/// One pour as written in a config file. Heights in millimeters.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub liquid: String,
    #[serde(default = "default_cup")]
    pub cup: String,
    #[serde(default = "default_bottle")]
    pub bottle: String,
    pub init_volume_ml: f64,
    #[serde(default)]
    pub prefill_mm: f64,
    pub target_mm: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrialEntry {
    pub fn to_scenario(
        &self,
        catalog: &Catalog,
        settings: SimSettings,
    ) -> Result<Scenario, HarnessError> {
        Ok(Scenario {
            liquid: catalog.liquid(&self.liquid)?.clone(),
            cup: catalog.cup(&self.cup)?.clone(),
            bottle: catalog.bottle(&self.bottle)?.clone(),
            initial_volume_ml: self.init_volume_ml,
            initial_height: self.prefill_mm / 1000.0,
            target_height: self.target_mm / 1000.0,
            settings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub liquid: String,
    #[serde(default = "default_cup")]
    pub cup: String,
    #[serde(default = "default_bottle")]
    pub bottle: String,
    pub init_volume_ml: f64,
    #[serde(default)]
    pub prefill_mm: f64,
    pub target_mm: f64,
    #[serde(default)]
    pub seed: u64,
    pub liquid_file: Option<PathBuf>,
    #[serde(default)]
    pub settings: SimSettings,
}

impl ScenarioFile {
    pub fn from_toml_str(s: &str, origin: &Path) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| config_error(origin, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&read(path)?, path)
    }

    pub fn trial(&self) -> TrialEntry {
        TrialEntry {
            liquid: self.liquid.clone(),
            cup: self.cup.clone(),
            bottle: self.bottle.clone(),
            init_volume_ml: self.init_volume_ml,
            prefill_mm: self.prefill_mm,
            target_mm: self.target_mm,
            seed: self.seed,
        }
    }

    /// Resolve presets. `base` is the directory relative paths start from.
    pub fn scenario(&self, base: &Path) -> Result<Scenario, HarnessError> {
        let catalog = catalog_for(self.liquid_file.as_deref(), base)?;
        let scenario = self.trial().to_scenario(&catalog, self.settings)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub family: Family,
    pub trials_per_group: Option<usize>,
    pub seed: Option<u64>,
    pub liquid_file: Option<PathBuf>,
    #[serde(default)]
    pub settings: SimSettings,
    #[serde(default, rename = "trial")]
    pub trials: Vec<TrialEntry>,
}

impl PlanFile {
    pub fn from_toml_str(s: &str, origin: &Path) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| config_error(origin, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&read(path)?, path)
    }

    /// Build the plan. `trials_per_group` overrides the file's value and only
    /// applies to generated designs.
    pub fn plan(
        &self,
        base: &Path,
        trials_per_group: Option<usize>,
    ) -> Result<ExperimentPlan, HarnessError> {
        if self.trials.is_empty() {
            let n = trials_per_group
                .or(self.trials_per_group)
                .unwrap_or(DEFAULT_TRIALS_PER_GROUP);
            return ExperimentPlan::standard_with(
                self.family,
                n,
                self.seed.unwrap_or(DEFAULT_PLAN_SEED),
                self.settings,
            );
        }
        if trials_per_group.is_some() || self.trials_per_group.is_some() || self.seed.is_some() {
            return Err(HarnessError::InvalidPlan(
                "trials_per_group and seed only apply to generated plans, not to explicit [[trial]] lists".into(),
            ));
        }
        let catalog = catalog_for(self.liquid_file.as_deref(), base)?;
        let trials = self
            .trials
            .iter()
            .map(|t| {
                Ok(TrialSpec {
                    scenario: t.to_scenario(&catalog, self.settings)?,
                    seed: t.seed,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        ExperimentPlan::new(self.family, trials)
    }
}

fn catalog_for(liquid_file: Option<&Path>, base: &Path) -> Result<Catalog, HarnessError> {
    match liquid_file {
        None => Ok(Catalog::default()),
        Some(p) => Catalog::default().with_liquid_file(&base.join(p)),
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn config_error(origin: &Path, e: toml::de::Error) -> HarnessError {
    HarnessError::Config {
        path: origin.display().to_string(),
        message: e.to_string(),
    }
}
