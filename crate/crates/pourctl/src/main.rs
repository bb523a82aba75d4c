//! `pourctl`: run simulated pours and experiment families, or estimate the
//! liquid height in a recorded point cloud.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pour_core::control::write_command_log;
use pour_core::geometry::io::save_point_cloud;
use pour_core::harness::{
    estimate_offline_file, run_experiment, Catalog, ExperimentPlan, ExperimentReport, Family,
    PlanFile, ScenarioFile, TrialOutcome, DEFAULT_PLAN_SEED, DEFAULT_TRIALS_PER_GROUP,
};
use pour_core::par::ExecMode;
use pour_core::sim::{render_cloud, run_closed_loop, PerceptionConfig, WorldState};

#[derive(Parser)]
#[command(
    name = "pourctl",
    version,
    about = "Liquid pouring simulator and height estimator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop pour described by a scenario file.
    Simulate {
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the controller command log here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the first rendered frame here as a point cloud.
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Run an experiment plan file or a standard family by name.
    Experiment {
        /// Plan file, or one of: liquids, initial_volume, target_height,
        /// bottle_opening, cups, pre_filled.
        plan: String,
        /// Trials per group for generated plans.
        #[arg(long)]
        trials: Option<usize>,
        /// Seed for generated plans named on the command line.
        #[arg(long)]
        seed: Option<u64>,
        /// Write per-trial results here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Run trials one after another on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Estimate the liquid height in a recorded point cloud.
    Estimate {
        cloud: PathBuf,
        /// Liquid preset name.
        #[arg(long)]
        liquid: String,
        /// Extra liquid presets (TOML) on top of the built-in ones.
        #[arg(long)]
        liquid_file: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            seed,
            csv,
            cloud,
        } => simulate(&scenario, seed, csv.as_deref(), cloud.as_deref()),
        Command::Experiment {
            plan,
            trials,
            seed,
            csv,
            sequential,
        } => {
            let mode = if sequential {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            };
            experiment(&plan, trials, seed, csv.as_deref(), mode)
        }
        Command::Estimate {
            cloud,
            liquid,
            liquid_file,
        } => estimate(&cloud, &liquid, liquid_file.as_deref()),
    }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(
    path: &Path,
    seed: Option<u64>,
    csv: Option<&Path>,
    cloud: Option<&Path>,
) -> Result<()> {
    let file = ScenarioFile::load(path)?;
    let scenario = file.scenario(base_dir(path))?;
    let seed = seed.unwrap_or(file.seed);

    if let Some(out) = cloud {
        let world = WorldState::new(
            scenario.liquid.clone(),
            scenario.cup.clone(),
            scenario.bottle.clone(),
            scenario.initial_volume_ml,
            scenario.initial_height,
        )?;
        save_point_cloud(out, &render_cloud(&world, &scenario.settings.sensor, seed))?;
    }

    let r = run_closed_loop(&scenario, seed)?;
    if let Some(out) = csv {
        let mut w = create(out)?;
        write_command_log(&mut w, &r.commands)?;
        w.flush()?;
    }
    let phases: Vec<&str> = r.phases.iter().map(|p| p.as_str()).collect();
    println!(
        "{} into {} cup from {} bottle, seed {seed}",
        scenario.liquid.name, scenario.cup.name, scenario.bottle.name
    );
    println!("target    {:.2} mm", r.target_height * 1000.0);
    println!("achieved  {:.2} mm", r.final_height * 1000.0);
    println!("error     {:+.2} mm", r.signed_error * 1000.0);
    println!(
        "duration  {:.2} s ({} commands, {} frames)",
        r.duration,
        r.commands.len(),
        r.frames
    );
    println!("phases    {}", phases.join(" -> "));
    Ok(())
}

fn experiment(
    plan: &str,
    trials: Option<usize>,
    seed: Option<u64>,
    csv: Option<&Path>,
    mode: ExecMode,
) -> Result<()> {
    let path = Path::new(plan);
    let plan = if path.is_file() {
        if seed.is_some() {
            bail!("--seed applies to family names; set `seed` in the plan file instead");
        }
        PlanFile::load(path)?.plan(base_dir(path), trials)?
    } else {
        let family: Family = plan
            .parse()
            .with_context(|| format!("`{plan}` is neither a plan file nor a family name"))?;
        ExperimentPlan::standard(
            family,
            trials.unwrap_or(DEFAULT_TRIALS_PER_GROUP),
            seed.unwrap_or(DEFAULT_PLAN_SEED),
        )?
    };

    let report = run_experiment(&plan, mode);
    if let Some(out) = csv {
        let mut w = create(out)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    print_summary(&report, &mut io::stdout().lock())?;

    let failed: Vec<String> = report
        .records
        .iter()
        .filter_map(|r| match &r.outcome {
            TrialOutcome::Finished { .. } => None,
            TrialOutcome::TimedOut { elapsed_s } => Some(format!(
                "trial {} timed out after {elapsed_s:.1} s",
                r.trial
            )),
            TrialOutcome::Failed(msg) => Some(format!("trial {} failed: {msg}", r.trial)),
        })
        .collect();
    if !failed.is_empty() {
        for f in &failed {
            eprintln!("{f}");
        }
        bail!(
            "{} of {} trials did not finish",
            failed.len(),
            report.records.len()
        );
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport, out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "family {} ({} trials)",
        report.family,
        report.records.len()
    )?;
    writeln!(
        out,
        "{:<28} {:>3} {:>10} {:>10} {:>9} {:>9} {:>10}",
        "group", "n", "mean mm", "|mean| mm", "std mm", "max mm", "|mean| ml"
    )?;
    for s in &report.summaries {
        writeln!(
            out,
            "{:<28} {:>3} {:>+10.2} {:>10.2} {:>9.2} {:>9.2} {:>10.1}",
            s.group,
            s.n,
            s.mean_error,
            s.mean_abs_error,
            s.std_abs_error,
            s.max_abs_error,
            s.mean_abs_error_ml
        )?;
    }
    Ok(())
}

fn estimate(cloud: &Path, liquid: &str, liquid_file: Option<&Path>) -> Result<()> {
    let mut catalog = Catalog::default();
    if let Some(p) = liquid_file {
        catalog = catalog.with_liquid_file(p)?;
    }
    let liquid = catalog.liquid(liquid)?;
    let report = estimate_offline_file(cloud, liquid, &PerceptionConfig::default())
        .with_context(|| format!("estimating {}", cloud.display()))?;
    println!("{report}");
    Ok(())
}
