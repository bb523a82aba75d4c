//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pour_core::control::{ControllerConfig, ControllerPhase, Observation, PourController};
use pour_core::geometry::{
    extract_above_plane, fit_cylinder_ransac, fit_plane_ransac, measure_raw_height, RansacConfig,
};
use pour_core::harness::{
    estimate_offline, height_error_to_volume, run_experiment, ExperimentPlan, Family,
};
use pour_core::optics::{
    correct_height, correction_factor, EstimateSource, HeightEstimate, LiquidSpec,
};
use pour_core::par::ExecMode;
use pour_core::sim::{
    render_cloud, run_closed_loop, BottleSpec, CupSpec, PerceptionConfig, Scenario, SensorModel,
    WorldState,
};
use pour_core::tracking::{predict, update, FilterParams, FilterState};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn water() -> LiquidSpec {
    LiquidSpec::transparent("water", 1.333)
}

fn milk() -> LiquidSpec {
    LiquidSpec::opaque("milk")
}

fn refraction_anchor() -> Result<String, String> {
    let f = correction_factor(1.33, 0.0).map_err(|e| e.to_string())?;
    ensure((f - 4.0303).abs() < 1e-3, format!("f(1.33, 0) = {f:.5}"))
}

/// Raw and corrected heights over repeated frames of a static scene, each
/// frame going through the full plane, cylinder and surface pipeline.
fn static_series(liquid: &LiquidSpec, frames: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let world = WorldState::new(
        liquid.clone(),
        CupSpec::blue(),
        BottleSpec::small(),
        400.0,
        0.06,
    )
    .unwrap();
    let sensor = SensorModel {
        dropout_probability: 0.0,
        ..SensorModel::default()
    };
    let cfg = PerceptionConfig::default();
    let (mut raw, mut corrected, mut alphas) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..frames {
        let cloud = render_cloud(&world, &sensor, seed);
        let ransac = RansacConfig { seed, ..cfg.ransac };
        let table = fit_plane_ransac(&cloud, &ransac).unwrap();
        let cup = fit_cylinder_ransac(
            &extract_above_plane(&cloud, &table, cfg.plane_margin),
            &table,
            &ransac,
        )
        .unwrap();
        let r = measure_raw_height(&cloud, &cup, &table, cfg.diameter_scale).unwrap();
        let est = correct_height(&r, liquid, cfg.raw_sigma).unwrap();
        raw.push(r.h_r);
        corrected.push(est.h);
        alphas.push(r.alpha);
    }
    (raw, corrected, alphas)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn noise_magnification() -> Result<String, String> {
    let start = Instant::now();
    let (milk_raw, _, _) = static_series(&milk(), 200);
    let (water_raw, water_corrected, alphas) = static_series(&water(), 200);
    let milk_sd = std(&milk_raw) * 1000.0;
    let raw_sd = std(&water_raw) * 1000.0;
    let corrected_sd = std(&water_corrected) * 1000.0;
    let f = correction_factor(1.333, mean(&alphas)).unwrap();
    let ratio = corrected_sd / raw_sd;
    let elapsed = start.elapsed();
    ensure(
        (0.12..=0.2).contains(&milk_sd)
            && (ratio / f - 1.0).abs() <= 0.15
            && corrected_sd > raw_sd
            && elapsed < Duration::from_secs(10),
        format!(
            "milk raw {:.2}+/-{milk_sd:.3} mm, water raw {:.2}+/-{raw_sd:.3} mm, corrected {:.2}+/-{corrected_sd:.3} mm, \
             ratio {ratio:.3} vs f {f:.3}, {:.1} s",
            mean(&milk_raw) * 1000.0,
            mean(&water_raw) * 1000.0,
            mean(&water_corrected) * 1000.0,
            elapsed.as_secs_f64()
        ),
    )
}

/// Signed errors in mm of `n` pours to 40 mm in the blue cup.
fn pours(liquid: LiquidSpec, n: u64) -> Vec<f64> {
    let sc = Scenario::new(liquid, CupSpec::blue(), BottleSpec::small(), 400.0, 0.04);
    let seeds: Vec<u64> = (0..n).collect();
    pour_core::par::map_slice(&seeds, ExecMode::Parallel, |s| {
        run_closed_loop(&sc, 1000 + s).unwrap().signed_error * 1000.0
    })
}

fn opaque_accuracy() -> Result<String, String> {
    let start = Instant::now();
    let errs = pours(milk(), 30);
    let signed = mean(&errs);
    let abs = mean(&errs.iter().map(|e| e.abs()).collect::<Vec<_>>());
    ensure(
        abs <= 3.0
            && signed > 0.0
            && (1.0..=3.0).contains(&signed)
            && start.elapsed() < Duration::from_secs(60),
        format!("30 milk pours: mean error {signed:+.2} mm, mean |error| {abs:.2} mm"),
    )
}

fn transparent_worse() -> Result<String, String> {
    let abs_mean = |e: Vec<f64>| mean(&e.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let m = abs_mean(pours(milk(), 30));
    let w = abs_mean(pours(water(), 30));
    ensure(
        w > m,
        format!("mean |error| water {w:.2} mm > milk {m:.2} mm"),
    )
}

fn volume_comparison() -> Result<String, String> {
    let v = height_error_to_volume(5.41, &CupSpec::blue());
    let report = run_experiment(
        &ExperimentPlan::standard(Family::Cups, 10, 7).unwrap(),
        ExecMode::Parallel,
    );
    let worst = report
        .summaries
        .iter()
        .filter(|s| s.group.starts_with("water/"))
        .map(|s| (s.group.clone(), s.mean_abs_error_ml))
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    ensure(
        (v - 23.9).abs() <= 0.2 && worst.1 < 38.0 && report.timeouts() == 0,
        format!(
            "5.41 mm in the blue cup = {v:.2} ml; worst water group {} at {:.1} ml",
            worst.0, worst.1
        ),
    )
}

fn filter_properties() -> Result<String, String> {
    let start = Instant::now();
    let params = FilterParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let a: f64 = rng.random_range(1e-8..1e-4);
        let b: f64 = rng.random_range(1e-8..1e-2);
        let c: f64 = rng.random_range(-0.99..0.99) * (a * b).sqrt();
        let mut s = FilterState {
            x: nalgebra::Vector2::new(rng.random_range(0.0..0.1), rng.random_range(-0.01..0.01)),
            covariance: Matrix2::new(a, c, c, b),
            last_update: 0.0,
        };
        for k in 1..=4 {
            let dt = rng.random_range(1e-3..0.5);
            s = predict(&s, dt, &params).map_err(|e| e.to_string())?;
            let z = HeightEstimate {
                h: rng.random_range(0.0..0.1),
                variance: rng.random_range(1e-10..1e-4),
                timestamp: k as f64,
                source: EstimateSource::Direct,
            };
            s = update(&s, &z, &params);
            let p = s.covariance;
            let scale = p.abs().max();
            let asym = (p[(0, 1)] - p[(1, 0)]).abs() / scale;
            let det = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
            let psd = p[(0, 0)] >= 0.0 && p[(1, 1)] >= 0.0 && det >= -1e-9 * scale * scale;
            if !psd {
                return Err(format!("covariance lost PSD: {p}"));
            }
            worst = worst.max(asym);
        }
    }
    let prior = FilterState {
        x: nalgebra::Vector2::new(0.050, 0.0),
        covariance: Matrix2::new(4e-6, 0.0, 0.0, 1e-6),
        last_update: 0.0,
    };
    let z = HeightEstimate {
        h: 0.054,
        variance: 4e-6,
        timestamp: 0.0,
        source: EstimateSource::Direct,
    };
    let post = update(&prior, &z, &params);
    let gain = (post.h() - prior.h()) / (z.h - prior.h());
    ensure(
        worst <= 1e-9
            && (gain - 0.5).abs() < 1e-12
            && (post.h() - 0.052).abs() < 1e-12
            && start.elapsed() < Duration::from_secs(30),
        format!("1e5 sequences, worst relative asymmetry {worst:.1e}; K = {gain}"),
    )
}

fn controller_properties() -> Result<String, String> {
    let cfg = ControllerConfig::default();
    let target = 0.04;
    let dt = 1.0 / 30.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for stream in 0..100 {
        let mut ctrl = PourController::new(cfg).unwrap();
        let mut prev_angle = ctrl.angle();
        let mut prev_phase: Option<ControllerPhase> = None;
        let mut h: f64 = 0.0;
        for k in 0..600 {
            let obs = match rng.random_range(0..10) {
                0 => Observation::NoLiquid,
                1 => Observation::Stale,
                _ => {
                    h += rng.random_range(0.0..0.0005);
                    Observation::Estimate(FilterState {
                        x: nalgebra::Vector2::new(h, 0.0),
                        covariance: Matrix2::identity() * 1e-8,
                        last_update: k as f64 * dt,
                    })
                }
            };
            let cmd = ctrl.step(obs, target, k as f64 * dt).unwrap();
            let legal = match (prev_phase, cmd.phase) {
                (None, p) => p.is_active() || p == ControllerPhase::Returning,
                (Some(a), b) if a.is_active() => b.is_active() || b == ControllerPhase::Returning,
                (Some(ControllerPhase::Returning), b) => {
                    matches!(b, ControllerPhase::Returning | ControllerPhase::Done)
                }
                (Some(ControllerPhase::Done), b) => b == ControllerPhase::Done,
                _ => false,
            };
            if !legal {
                return Err(format!(
                    "stream {stream}: illegal transition {prev_phase:?} -> {:?}",
                    cmd.phase
                ));
            }
            if (cmd.wrist_angle - prev_angle).abs() > cfg.max_slew() * dt * (1.0 + 1e-12) {
                return Err(format!(
                    "stream {stream}: slew {} rad in one tick",
                    cmd.wrist_angle - prev_angle
                ));
            }
            if !(cfg.min_angle..=cfg.max_angle).contains(&cmd.wrist_angle) {
                return Err(format!(
                    "stream {stream}: angle {} out of bounds",
                    cmd.wrist_angle
                ));
            }
            if cmd.phase.is_active() && cmd.wrist_angle < prev_angle {
                return Err(format!("stream {stream}: angle decreased while pouring"));
            }
            prev_angle = cmd.wrist_angle;
            prev_phase = Some(cmd.phase);
        }
    }

    let mut ctrl = PourController::new(cfg).unwrap();
    for k in 0..30 {
        let est = FilterState {
            x: nalgebra::Vector2::new(0.01, 0.0),
            covariance: Matrix2::identity() * 1e-8,
            last_update: 0.0,
        };
        ctrl.step(Observation::Estimate(est), target, k as f64 * dt)
            .unwrap();
    }
    let held: Vec<u64> = (30..33)
        .map(|k| {
            ctrl.step(Observation::Stale, target, k as f64 * dt)
                .unwrap()
                .wrist_angle
                .to_bits()
        })
        .collect();
    ensure(
        held.windows(2).all(|w| w[0] == w[1]) && ctrl.angle().to_bits() == held[0] && ctrl.angle() > 0.0,
        "100 random streams legal, slew- and bound-limited; 3 stale ticks hold the angle bit-for-bit".into(),
    )
}

fn round_trip() -> Result<String, String> {
    let mut worst: (f64, String) = (0.0, String::new());
    for cup in [CupSpec::text(), CupSpec::patterned(), CupSpec::blue()] {
        for mm in [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0] {
            let world = WorldState::new(
                water(),
                cup.clone(),
                BottleSpec::small(),
                400.0,
                mm / 1000.0,
            )
            .unwrap();
            let cloud = render_cloud(&world, &SensorModel::ideal(), 0);
            let report = estimate_offline(&cloud, &water(), &PerceptionConfig::default())
                .map_err(|e| format!("{} cup at {mm} mm: {e}", cup.name))?;
            let err = (report.estimate.h * 1000.0 - mm).abs();
            if err >= worst.0 {
                worst = (err, format!("{} cup at {mm} mm", cup.name));
            }
        }
    }
    ensure(
        worst.0 < 0.1,
        format!("worst recovery error {:.4} mm ({})", worst.0, worst.1),
    )
}

fn robustness_families() -> Result<String, String> {
    let mut lines = Vec::new();
    let mut ok = true;
    for family in [
        Family::BottleOpening,
        Family::TargetHeight,
        Family::InitialVolume,
        Family::PreFilled,
    ] {
        let report = run_experiment(
            &ExperimentPlan::standard(family, 10, 9).unwrap(),
            ExecMode::Parallel,
        );
        ok &= report.timeouts() == 0;
        for (liquid, spread) in report.spread_by_liquid() {
            ok &= spread <= 3.0;
            lines.push(format!("{family}/{liquid} {spread:.2}"));
        }
    }
    ensure(ok, format!("group-mean spreads (mm): {}", lines.join(", ")))
}

fn determinism() -> Result<String, String> {
    let plan = ExperimentPlan::standard(Family::Liquids, 2, 10).unwrap();
    let a = run_experiment(&plan, ExecMode::Parallel).to_csv_string();
    let b = run_experiment(&plan, ExecMode::Parallel).to_csv_string();
    let c = run_experiment(&plan, ExecMode::Sequential).to_csv_string();
    ensure(
        a == b && a == c,
        format!(
            "{} CSV bytes identical across two parallel runs and one sequential run",
            a.len()
        ),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("refraction anchor", refraction_anchor),
        ("noise magnification", noise_magnification),
        ("opaque closed-loop accuracy", opaque_accuracy),
        ("transparent error above opaque", transparent_worse),
        ("volume comparison", volume_comparison),
        ("filter properties", filter_properties),
        ("controller properties", controller_properties),
        ("round-trip identity", round_trip),
        ("robustness families", robustness_families),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", checks.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", checks.len());
}
