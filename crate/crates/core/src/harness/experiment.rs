use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{height_error_to_volume, HarnessError, SummaryStats};
use crate::optics::{builtin_liquids, LiquidSpec};
use crate::par::{self, ExecMode};
use crate::sim::{run_closed_loop, BottleSpec, CupSpec, Scenario, SimError, SimSettings};

/// The bottle must hold at least this much more than the pour needs, ml.
pub const HEADROOM_ML: f64 = 100.0;
pub const DEFAULT_TRIALS_PER_GROUP: usize = 10;
pub const DEFAULT_PLAN_SEED: u64 = 1;

pub const CSV_HEADER: [&str; 13] = [
    "trial",
    "family",
    "liquid",
    "cup",
    "bottle",
    "init_volume_ml",
    "prefill_mm",
    "target_mm",
    "achieved_mm",
    "error_mm",
    "error_ml",
    "duration_s",
    "seed",
];

const VOLUMES_ML: [f64; 7] = [200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0];
const TARGETS_MM: [f64; 6] = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0];
const PREFILLS_MM: [f64; 5] = [10.0, 15.0, 20.0, 25.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Five liquids, random volumes and targets.
    Liquids,
    /// Fixed 40 mm target, bottle volume varied.
    InitialVolume,
    /// Fixed 400 ml bottle, target varied.
    TargetHeight,
    /// Small against wide bottle opening.
    BottleOpening,
    /// The three cups.
    Cups,
    /// Empty against partly filled cup.
    PreFilled,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Liquids,
        Family::InitialVolume,
        Family::TargetHeight,
        Family::BottleOpening,
        Family::Cups,
        Family::PreFilled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Liquids => "liquids",
            Family::InitialVolume => "initial_volume",
            Family::TargetHeight => "target_height",
            Family::BottleOpening => "bottle_opening",
            Family::Cups => "cups",
            Family::PreFilled => "pre_filled",
        }
    }

    /// The factor this family varies, for one trial. Groups are formed by
    /// liquid and this label.
    fn variant(self, sc: &Scenario) -> String {
        match self {
            Family::Liquids => String::new(),
            Family::InitialVolume => format!("{}ml", sc.initial_volume_ml),
            Family::TargetHeight => format!("{}mm", round_mm(sc.target_height)),
            Family::BottleOpening => sc.bottle.name.clone(),
            Family::Cups => sc.cup.name.clone(),
            Family::PreFilled if sc.initial_height > 0.0 => "prefilled".into(),
            Family::PreFilled => "empty".into(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = HarnessError;

    /// Case-insensitive; `-` and `_` are interchangeable and optional.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().replace('_', "") == key)
            .ok_or_else(|| HarnessError::UnknownFamily(s.to_owned()))
    }
}

fn round_mm(m: f64) -> f64 {
    (m * 1e4).round() / 10.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub scenario: Scenario,
    pub seed: u64,
}

/// A validated list of trials from one family.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    family: Family,
    trials: Vec<TrialSpec>,
}

impl ExperimentPlan {
    /// Rejects plans with invalid scenarios or bottles that would hold less
    /// than [`HEADROOM_ML`] beyond the pour.
    pub fn new(family: Family, trials: Vec<TrialSpec>) -> Result<Self, HarnessError> {
        if trials.is_empty() {
            return Err(HarnessError::InvalidPlan("plan has no trials".into()));
        }
        for (i, t) in trials.iter().enumerate() {
            let sc = &t.scenario;
            sc.validate()
                .map_err(|e| HarnessError::InvalidPlan(format!("trial {i}: {e}")))?;
            let needed = sc.cup.volume_ml(sc.target_height - sc.initial_height);
            if sc.initial_volume_ml < needed + HEADROOM_ML {
                return Err(HarnessError::InvalidPlan(format!(
                    "trial {i}: bottle holds {} ml but the pour needs {needed:.1} ml plus {HEADROOM_ML} ml headroom",
                    sc.initial_volume_ml
                )));
            }
        }
        Ok(Self { family, trials })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn trials(&self) -> &[TrialSpec] {
        &self.trials
    }

    /// The family's standard design with default simulator settings.
    pub fn standard(
        family: Family,
        trials_per_group: usize,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        Self::standard_with(family, trials_per_group, seed, SimSettings::default())
    }

    /// The family's standard design. Random volumes, targets, pre-fill levels
    /// and trial seeds all come from `seed`.
    pub fn standard_with(
        family: Family,
        trials_per_group: usize,
        seed: u64,
        settings: SimSettings,
    ) -> Result<Self, HarnessError> {
        if trials_per_group == 0 {
            return Err(HarnessError::InvalidPlan(
                "trials per group must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let liquids = builtin_liquids();
        let preset = |name: &str| {
            liquids
                .iter()
                .find(|l| l.name == name)
                .expect("built-in liquid")
                .clone()
        };
        let water_milk = [preset("water"), preset("milk")];

        // (liquid, cup, bottle, fixed volume, fixed target mm, prefilled)
        type Group = (
            LiquidSpec,
            CupSpec,
            BottleSpec,
            Option<f64>,
            Option<f64>,
            bool,
        );
        let base = |l: &LiquidSpec| -> Group {
            (
                l.clone(),
                CupSpec::blue(),
                BottleSpec::small(),
                None,
                None,
                false,
            )
        };
        let groups: Vec<Group> = match family {
            Family::Liquids => liquids.iter().map(base).collect(),
            Family::InitialVolume => cross(
                &water_milk,
                &[350.0, 400.0, 450.0, 500.0],
                |g, v| {
                    g.3 = Some(v);
                    g.4 = Some(40.0);
                },
                base,
            ),
            Family::TargetHeight => cross(
                &water_milk,
                &[30.0, 40.0, 50.0, 60.0],
                |g, t| {
                    g.3 = Some(400.0);
                    g.4 = Some(t);
                },
                base,
            ),
            Family::BottleOpening => cross(
                &water_milk,
                &[BottleSpec::small(), BottleSpec::wide()],
                |g, b| g.2 = b,
                base,
            ),
            Family::Cups => cross(
                &water_milk,
                &[CupSpec::text(), CupSpec::patterned(), CupSpec::blue()],
                |g, c| g.1 = c,
                base,
            ),
            Family::PreFilled => cross(&water_milk, &[false, true], |g, p| g.5 = p, base),
        };

        let mut trials = Vec::with_capacity(groups.len() * trials_per_group);
        for (liquid, cup, bottle, volume, target, prefilled) in groups {
            for _ in 0..trials_per_group {
                let prefill = if prefilled {
                    *PREFILLS_MM.choose(&mut rng).expect("non-empty")
                } else {
                    0.0
                };
                let target = target.unwrap_or_else(|| {
                    let ok: Vec<f64> = TARGETS_MM
                        .into_iter()
                        .filter(|t| {
                            *t >= prefill + 10.0
                                && fits(
                                    &cup,
                                    prefill,
                                    *t,
                                    volume.unwrap_or(VOLUMES_ML[VOLUMES_ML.len() - 1]),
                                )
                        })
                        .collect();
                    *ok.choose(&mut rng).expect("some target fits")
                });
                let volume = volume.unwrap_or_else(|| {
                    let ok: Vec<f64> = VOLUMES_ML
                        .into_iter()
                        .filter(|v| fits(&cup, prefill, target, *v))
                        .collect();
                    *ok.choose(&mut rng).expect("some volume fits")
                });
                trials.push(TrialSpec {
                    scenario: Scenario {
                        liquid: liquid.clone(),
                        cup: cup.clone(),
                        bottle: bottle.clone(),
                        initial_volume_ml: volume,
                        initial_height: prefill / 1000.0,
                        target_height: target / 1000.0,
                        settings,
                    },
                    seed: rng.next_u64(),
                });
            }
        }
        Self::new(family, trials)
    }
}

fn fits(cup: &CupSpec, prefill_mm: f64, target_mm: f64, volume_ml: f64) -> bool {
    volume_ml >= cup.volume_ml((target_mm - prefill_mm) / 1000.0) + HEADROOM_ML
}

fn cross<G, V: Clone>(
    liquids: &[LiquidSpec],
    values: &[V],
    set: impl Fn(&mut G, V),
    base: impl Fn(&LiquidSpec) -> G,
) -> Vec<G> {
    let mut out = Vec::new();
    for l in liquids {
        for v in values {
            let mut g = base(l);
            set(&mut g, v.clone());
            out.push(g);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Finished {
        achieved_mm: f64,
        error_mm: f64,
        error_ml: f64,
        duration_s: f64,
    },
    TimedOut {
        elapsed_s: f64,
    },
    /// Any other simulation error, such as the scene not being recognized.
    Failed(String),
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub family: Family,
    /// `liquid` or `liquid/variant`.
    pub group: String,
    pub liquid: String,
    pub cup: String,
    pub bottle: String,
    pub init_volume_ml: f64,
    pub prefill_mm: f64,
    pub target_mm: f64,
    pub seed: u64,
    pub outcome: TrialOutcome,
}

impl TrialRecord {
    pub fn error_mm(&self) -> Option<f64> {
        match self.outcome {
            TrialOutcome::Finished { error_mm, .. } => Some(error_mm),
            _ => None,
        }
    }

    fn csv_fields(&self) -> [String; 13] {
        let (achieved, error, error_ml, duration) = match &self.outcome {
            TrialOutcome::Finished {
                achieved_mm,
                error_mm,
                error_ml,
                duration_s,
            } => (
                format!("{achieved_mm:.3}"),
                format!("{error_mm:.3}"),
                format!("{error_ml:.3}"),
                format!("{duration_s:.3}"),
            ),
            _ => Default::default(),
        };
        [
            self.trial.to_string(),
            self.family.to_string(),
            self.liquid.clone(),
            self.cup.clone(),
            self.bottle.clone(),
            format!("{}", self.init_volume_ml),
            format!("{:.1}", self.prefill_mm),
            format!("{:.1}", self.target_mm),
            achieved,
            error,
            error_ml,
            duration,
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub family: Family,
    /// In plan order.
    pub records: Vec<TrialRecord>,
    /// One entry per group with at least one finished trial, in order of
    /// first appearance.
    pub summaries: Vec<SummaryStats>,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record(r.csv_fields())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn summary(&self, group: &str) -> Option<&SummaryStats> {
        self.summaries.iter().find(|s| s.group == group)
    }

    /// For each liquid, the range of group mean absolute errors across the
    /// family's variants, mm.
    pub fn spread_by_liquid(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64, f64)> = Vec::new();
        for s in &self.summaries {
            let liquid = s.group.split('/').next().unwrap_or_default();
            match out.iter_mut().find(|(l, _, _)| l == liquid) {
                Some(e) => {
                    e.1 = e.1.min(s.mean_abs_error);
                    e.2 = e.2.max(s.mean_abs_error);
                }
                None => out.push((liquid.to_owned(), s.mean_abs_error, s.mean_abs_error)),
            }
        }
        out.into_iter().map(|(l, lo, hi)| (l, hi - lo)).collect()
    }

    pub fn timeouts(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, TrialOutcome::TimedOut { .. }))
            .count()
    }
}

/// Run every trial. Trials are independent and may run in parallel; records
/// always come back in plan order. Failed trials are flagged in their record
/// and do not stop the batch.
pub fn run_experiment(plan: &ExperimentPlan, mode: ExecMode) -> ExperimentReport {
    let indexed: Vec<(usize, &TrialSpec)> = plan.trials.iter().enumerate().collect();
    let records = par::map_slice(&indexed, mode, |(i, t)| run_trial(plan.family, *i, t));

    let mut groups: Vec<GroupTally> = Vec::new();
    for r in &records {
        let idx = match groups.iter().position(|g| g.group == r.group) {
            Some(i) => i,
            None => {
                groups.push(GroupTally {
                    group: r.group.clone(),
                    errors: Vec::new(),
                    unfinished: 0,
                });
                groups.len() - 1
            }
        };
        match r.outcome {
            TrialOutcome::Finished {
                error_mm, error_ml, ..
            } => groups[idx].errors.push((error_mm, error_ml)),
            _ => groups[idx].unfinished += 1,
        }
    }
    let summaries = groups
        .iter()
        .filter_map(|g| SummaryStats::from_errors(&g.group, &g.errors, g.unfinished))
        .collect();
    ExperimentReport {
        family: plan.family,
        records,
        summaries,
    }
}

struct GroupTally {
    group: String,
    /// `(mm, ml)` of finished trials.
    errors: Vec<(f64, f64)>,
    unfinished: usize,
}

fn run_trial(family: Family, index: usize, t: &TrialSpec) -> TrialRecord {
    let sc = &t.scenario;
    let outcome = match run_closed_loop(sc, t.seed) {
        Ok(r) => {
            let error_mm = r.signed_error * 1000.0;
            TrialOutcome::Finished {
                achieved_mm: r.final_height * 1000.0,
                error_mm,
                error_ml: height_error_to_volume(error_mm, &sc.cup),
                duration_s: r.duration,
            }
        }
        Err(SimError::TrialTimeout { elapsed, .. }) => {
            TrialOutcome::TimedOut { elapsed_s: elapsed }
        }
        Err(e) => TrialOutcome::Failed(e.to_string()),
    };
    let variant = family.variant(sc);
    TrialRecord {
        trial: index,
        family,
        group: if variant.is_empty() {
            sc.liquid.name.clone()
        } else {
            format!("{}/{variant}", sc.liquid.name)
        },
        liquid: sc.liquid.name.clone(),
        cup: sc.cup.name.clone(),
        bottle: sc.bottle.name.clone(),
        init_volume_ml: sc.initial_volume_ml,
        prefill_mm: round_mm(sc.initial_height),
        target_mm: round_mm(sc.target_height),
        seed: t.seed,
        outcome,
    }
}
