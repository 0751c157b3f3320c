//! End-to-end acceptance checks. Runs without the libtest harness so that
//! the one-line verdict per criterion is always printed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, RowVector3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sfrj::ann::{self, Activation, MlpModel, TrainConfig};
use sfrj::atmosphere::freestream_totals;
use sfrj::combustor::{Plant, PlantConfig};
use sfrj::equilibrium::{element_totals, frozen_enthalpy, fuel, EquilibriumSolver};
use sfrj::harness::{self, LoopConfig, Scenarios, Termination};
use sfrj::rcac::{rcac_update, RcacConfig, RcacState};
use sfrj::thermo::ThermoDb;

const ATM: f64 = 101_325.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn criterion_1() -> Verdict {
    let _ = freestream_totals(3.25, 30_000.0);
    let start = Instant::now();
    let f = freestream_totals(3.25, 30_000.0).unwrap();
    let elapsed = start.elapsed();
    let ratio = f.total_temperature / f.static_temperature;
    let pt_ok = (63_040.0..=64_314.0).contains(&f.total_pressure);
    let ratio_ok = (ratio - 3.1125).abs() <= 1e-12 * 3.1125;
    verdict(
        pt_ok && ratio_ok && within(elapsed, Duration::from_millis(1)),
        format!("Pt0 = {:.1} Pa, Tt0/T0 = {ratio:.12}, {elapsed:?}", f.total_pressure),
    )
}

/// Direct minimiser of the accumulated retrospective cost by normal
/// equations, with the filtered regressors rebuilt from raw history.
fn batch_theta(cfg: &RcacConfig, zs: &[f64], phis: &[RowVector3<f64>], us: &[f64], len: usize) -> Vector3<f64> {
    let p0_inv = Matrix3::identity() / cfg.p;
    let mut lhs = p0_inv;
    let mut rhs = p0_inv * Vector3::from(cfg.theta0);
    for k in 0..len {
        let mut phi_f = RowVector3::zeros();
        let mut u_f = 0.0;
        for (i, n) in cfg.filter.iter().enumerate() {
            if k > i {
                phi_f += phis[k - i - 1] * *n;
                u_f += n * us[k - i - 1];
            }
        }
        lhs += phi_f.transpose() * phi_f * cfg.rz;
        rhs -= phi_f.transpose() * (cfg.rz * (zs[k] - u_f));
    }
    lhs.lu().solve(&rhs).expect("normal equations are positive definite")
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let nf = rng.gen_range(1..=3);
        let cfg = RcacConfig {
            p: 10f64.powf(rng.gen_range(-5.0..0.0)),
            rz: 10f64.powf(rng.gen_range(-1.0..1.0)),
            filter: (0..nf).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            theta0: [
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            ],
            ..RcacConfig::default()
        };
        let n = 50;
        let zs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let phis: Vec<RowVector3<f64>> = (0..n)
            .map(|_| {
                RowVector3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-5.0..5.0),
                )
            })
            .collect();
        let us: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut state = RcacState::new(&cfg);
        for k in 0..n {
            rcac_update(&mut state, &cfg, zs[k]);
            state.record(phis[k], us[k], cfg.filter.len());
            let b = batch_theta(&cfg, &zs, &phis, &us, k + 1);
            worst = worst.max((state.theta - b).norm() / b.norm());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-8 && within(elapsed, Duration::from_secs(1)),
        format!("max relative deviation {worst:.2e} over 30 x 50 prefixes, {elapsed:?}"),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let db = ThermoDb::standard();
    let solver = EquilibriumSolver::new(db);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_el, mut worst_h, mut failures) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..200 {
        let phi = rng.gen_range(0.2..1.5);
        let p = rng.gen_range(0.5..5.0) * ATM;
        let t2 = rng.gen_range(400.0..900.0);
        let problem = fuel::hp_problem(db, phi, t2, p).unwrap();
        let Ok(res) = solver.equilibrate_hp(&problem) else {
            failures += 1;
            continue;
        };
        if !res.converged {
            failures += 1;
        }
        let b0 = element_totals(db, &problem.reactant_moles).unwrap();
        let b = element_totals(db, &res.moles).unwrap();
        for (e, v0) in &b0 {
            worst_el = worst_el.max((b[e] - v0).abs() / v0);
        }
        let sfrj::equilibrium::EquilibriumMode::FixedH(h0) = problem.mode else {
            unreachable!()
        };
        let h = frozen_enthalpy(db, res.temperature, &res.moles).unwrap();
        worst_h = worst_h.max((h - h0).abs() / h0.abs().max(1.0));
    }
    let lean: Vec<f64> = [0.2, 0.4, 0.6, 0.8, 1.0]
        .iter()
        .map(|&phi| {
            solver
                .equilibrate_hp(&fuel::hp_problem(db, phi, 650.0, ATM).unwrap())
                .unwrap()
                .temperature
        })
        .collect();
    let monotone = lean.windows(2).all(|w| w[1] > w[0]);
    let elapsed = start.elapsed();
    verdict(
        failures == 0 && worst_el < 1e-8 && worst_h < 1e-6 && monotone && within(elapsed, Duration::from_secs(30)),
        format!(
            "{failures} failures, element {worst_el:.1e}, enthalpy {worst_h:.1e}, lean T {:?} K, {elapsed:?}",
            lean.iter().map(|t| t.round()).collect::<Vec<_>>()
        ),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for act in Activation::ALL {
        for _ in 0..10 {
            let hidden = rng.gen_range(2..8);
            let mut m = MlpModel::new(&[4, hidden, 1], act, &mut rng).unwrap();
            for l in &mut m.layers {
                l.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            let xs: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let ys: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (_, g) = m.loss_and_gradient(&xs, &ys);
            let h = 1e-6;
            for l in 0..m.layers.len() {
                for bias in [false, true] {
                    let len = if bias {
                        m.layers[l].biases.len()
                    } else {
                        m.layers[l].weights.len()
                    };
                    for i in 0..len {
                        let loss_at = |d: f64| {
                            let mut p = m.clone();
                            let v = if bias {
                                &mut p.layers[l].biases
                            } else {
                                &mut p.layers[l].weights
                            };
                            v[i] += d;
                            p.loss_and_gradient(&xs, &ys).0
                        };
                        let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                        let an = if bias { g.biases[l][i] } else { g.weights[l][i] };
                        worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
                    }
                }
            }
        }
    }
    let data = ann::generate_dataset(3, &Plant::new(PlantConfig::default()).unwrap()).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 5,
        seed: 99,
        ..TrainConfig::default()
    };
    let a = serde_json::to_string(&ann::train_new(&data, &cfg).unwrap().0).unwrap();
    let b = serde_json::to_string(&ann::train_new(&data, &cfg).unwrap().0).unwrap();
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-5 && a == b && within(elapsed, Duration::from_secs(10)),
        format!(
            "max gradient relative error {worst:.2e}, reproducible {}, {elapsed:?}",
            a == b
        ),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let plant = Plant::new(PlantConfig::default()).unwrap();
    let data = ann::generate_dataset(20, &plant).unwrap();
    let (_, hist) = ann::train_new(&data, &TrainConfig::default()).unwrap();
    let test = *hist.test.last().unwrap();
    let elapsed = start.elapsed();
    verdict(
        data.rows.len() == 8000 && test < 1e-3 && within(elapsed, Duration::from_secs(300)),
        format!("{} rows, normalized test MSE {test:.3e}, {elapsed:?}", data.rows.len()),
    )
}

/// Estimator for the closed-loop criteria, trained on the full 50^3 grid.
fn feedback_model(plant: &Plant) -> (MlpModel, Duration) {
    let start = Instant::now();
    let data = ann::generate_dataset(50, plant).unwrap();
    let (model, _) = ann::train_new(&data, &TrainConfig::default()).unwrap();
    (model, start.elapsed())
}

fn finite_and_bounded(rec: &harness::RunRecord, bounds: [f64; 2]) -> bool {
    rec.rows.iter().all(|r| {
        [
            r.thrust_true,
            r.thrust_pred,
            r.z,
            r.u,
            r.r0,
            r.gains[0],
            r.gains[1],
            r.gains[2],
            r.pt4,
        ]
        .iter()
        .all(|v| v.is_finite())
            && (bounds[0]..=bounds[1]).contains(&r.r0)
    })
}

fn criterion_6(plant: &Plant, model: &MlpModel, train_time: Duration) -> Verdict {
    let start = Instant::now();
    let cfg = LoopConfig::default();
    let signal = Scenarios::default().step;
    let rec = match harness::run_closed_loop(&cfg, &signal, Some(model), plant) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let elapsed = start.elapsed() + train_time;
    let settle = harness::settling_step(&rec, 2.0);
    let ok = settle.is_some()
        && rec.termination == Termination::Burnout
        && finite_and_bounded(&rec, cfg.bounds(plant.config()));
    verdict(
        ok && within(elapsed, Duration::from_secs(120)),
        format!(
            "|z| < 2 N from step {:?} of {} until burnout, final |z| {:.2e} N, {elapsed:?} incl. training",
            settle,
            rec.rows.len(),
            rec.rows.last().map_or(f64::NAN, |r| r.z.abs())
        ),
    )
}

fn criterion_7(plant: &Plant, model: &MlpModel) -> Verdict {
    let start = Instant::now();
    let cfg = LoopConfig::default();
    let s = Scenarios::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, signal) in [("doublet", &s.doublet), ("ramp", &s.ramp), ("harmonic", &s.harmonic)] {
        match harness::run_closed_loop(&cfg, signal, Some(model), plant) {
            Ok(rec) => {
                let err = harness::final_quarter_mean_abs_error(&rec);
                let limit = 0.05 * signal.peak();
                ok &= err < limit && finite_and_bounded(&rec, cfg.bounds(plant.config()));
                parts.push(format!("{name} {err:.2e} N (limit {limit:.1})"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name} failed: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        ok && within(elapsed, Duration::from_secs(360)),
        format!("{}, {elapsed:?}", parts.join(", ")),
    )
}

fn criterion_8(plant: &Plant, model: &MlpModel) -> Verdict {
    let start = Instant::now();
    let cfg = LoopConfig::default();
    let runs = harness::hyperparameter_sweep(
        &cfg,
        &Scenarios::default().step,
        &[0.1, 1.0, 10.0],
        &[1e-4, 1e-5, 1e-6, 1e-7],
        Some(model),
        plant,
    );
    let bounds = cfg.bounds(plant.config());
    let ok = runs.len() == 12
        && runs
            .iter()
            .all(|r| r.error.is_none() && r.record.as_ref().is_some_and(|rec| finite_and_bounded(rec, bounds)));
    println!("    n      p       steps  overshoot_N  settling_step");
    for r in &runs {
        println!(
            "    {:<6} {:<7.0e} {:<6} {:<12.3e} {}",
            r.n,
            r.p,
            r.steps,
            r.overshoot,
            r.settling_step.map_or("-".into(), |s| s.to_string())
        );
    }
    for line in harness::sweep_trend_report(&runs).lines() {
        println!("    {line}");
    }
    let elapsed = start.elapsed();
    verdict(
        ok && within(elapsed, Duration::from_secs(900)),
        format!("{} runs complete and bounded, {elapsed:?}", runs.len()),
    )
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_sfrj"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("sfrj {args:?} exited with {status}"))
    }
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{ "points_per_axis": 4, "train": { "epochs": 5 }, "loop": { "duration": 5.0 } }"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let mut checked = Vec::new();
    for attempt in ["a", "b"] {
        let root = tmp.path().join(attempt);
        let data = root.join("gen-data").join("dataset.csv");
        let model = root.join("train-ann").join("model.json");
        let (data, model) = (data.to_str().unwrap().to_string(), model.to_str().unwrap().to_string());
        let commands: Vec<(&str, Vec<&str>)> = vec![
            ("gen-data", vec!["gen-data", "--config", cfg, "--seed", "7"]),
            (
                "train-ann",
                vec!["train-ann", "--config", cfg, "--seed", "7", "--data", &data],
            ),
            (
                "eval-ann",
                vec!["eval-ann", "--config", cfg, "--model", &model, "--data", &data],
            ),
            (
                "simulate-true",
                vec!["simulate", "--config", cfg, "--feedback", "true", "--scenario", "ramp"],
            ),
            (
                "simulate-ann",
                vec![
                    "simulate",
                    "--config",
                    cfg,
                    "--feedback",
                    "ann",
                    "--model",
                    &model,
                    "--scenario",
                    "harmonic",
                ],
            ),
            (
                "sweep-ann",
                vec!["sweep-ann", "--config", cfg, "--seed", "7", "--data", &data],
            ),
            ("sweep-rcac", vec!["sweep-rcac", "--config", cfg, "--feedback", "true"]),
        ];
        for (name, args) in commands {
            if let Err(e) = run_cli(&args, &root.join(name)) {
                return verdict(false, e);
            }
        }
    }
    let a = csv_files(&tmp.path().join("a"));
    let b = csv_files(&tmp.path().join("b"));
    let identical = !a.is_empty() && a == b;
    if identical {
        checked.extend(a.keys().cloned());
    }
    let elapsed = start.elapsed();
    verdict(
        identical,
        format!("{} CSV files byte-identical across reruns, {elapsed:?}", checked.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!("criterion {n}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, v));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    let plant = Plant::new(PlantConfig::default()).unwrap();
    let (model, train_time) = feedback_model(&plant);
    println!("    closed-loop estimator trained on 50^3 grid in {train_time:?}");
    report(6, criterion_6(&plant, &model, train_time));
    report(7, criterion_7(&plant, &model));
    report(8, criterion_8(&plant, &model));
    report(9, criterion_9());
    let failed: Vec<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
