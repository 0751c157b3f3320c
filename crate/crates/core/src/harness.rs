//! Closed-loop simulation: command generator → adaptive PID → cowl actuation
//! → plant → thrust estimate → feedback. Also the RCAC hyperparameter sweep,
//! run metrics and artifact writing (CSV, JSON manifest, SVG plots).

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{MlpModel, SweepGrid, TrainConfig};
use crate::atmosphere::freestream_totals;
use crate::combustor::{CombustorOutputs, Plant, PlantConfig};
use crate::error::{Error, Result};
use crate::plot::{self, Series};
use crate::rcac::{rcac_pid_step, RcacConfig, RcacState};

pub const RUN_CSV_HEADER: &str =
    "t_s,command_N,thrust_true_N,thrust_pred_N,z_N,u,r0_m,Kp,Ki,Kd,rdot_m_s,Pt4_Pa,r3_m,X_CO";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandSignal {
    Constant {
        value: f64,
    },
    /// Zero before `t_on`, `amplitude` afterwards.
    Step {
        amplitude: f64,
        t_on: f64,
    },
    /// `baseline + amplitude` on `[t_on, t_on + half_period)`,
    /// `baseline - amplitude` on the following half period, baseline otherwise.
    Doublet {
        baseline: f64,
        amplitude: f64,
        t_on: f64,
        half_period: f64,
    },
    /// Piecewise-linear through `(t, value)` breakpoints, held constant
    /// outside them.
    Ramp {
        breakpoints: Vec<[f64; 2]>,
    },
    /// `offset + amplitude * sin(2 pi f t + phase)`
    Harmonic {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl CommandSignal {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("command signal: {m}")));
        match self {
            CommandSignal::Step { t_on, .. } if *t_on < 0.0 => bad("t_on must be nonnegative"),
            CommandSignal::Doublet { t_on, half_period, .. } if *t_on < 0.0 || *half_period <= 0.0 => {
                bad("doublet timing must be nonnegative with a positive half period")
            }
            CommandSignal::Ramp { breakpoints } => {
                if breakpoints.is_empty() {
                    return bad("ramp needs at least one breakpoint");
                }
                if breakpoints[0][0] < 0.0 || breakpoints.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return bad("ramp breakpoint times must be nonnegative and increasing");
                }
                Ok(())
            }
            CommandSignal::Harmonic { frequency, .. } if *frequency < 0.0 => bad("frequency must be nonnegative"),
            _ => Ok(()),
        }
    }

    /// Largest |command| the signal can produce.
    pub fn peak(&self) -> f64 {
        match self {
            CommandSignal::Constant { value } => value.abs(),
            CommandSignal::Step { amplitude, .. } => amplitude.abs(),
            CommandSignal::Doublet {
                baseline, amplitude, ..
            } => baseline.abs() + amplitude.abs(),
            CommandSignal::Ramp { breakpoints } => breakpoints.iter().map(|b| b[1].abs()).fold(0.0, f64::max),
            CommandSignal::Harmonic { offset, amplitude, .. } => offset.abs() + amplitude.abs(),
        }
    }
}

pub fn command_value(signal: &CommandSignal, t: f64) -> f64 {
    match signal {
        CommandSignal::Constant { value } => *value,
        CommandSignal::Step { amplitude, t_on } => {
            if t >= *t_on {
                *amplitude
            } else {
                0.0
            }
        }
        CommandSignal::Doublet {
            baseline,
            amplitude,
            t_on,
            half_period,
        } => {
            if t < *t_on || t >= t_on + 2.0 * half_period {
                *baseline
            } else if t < t_on + half_period {
                baseline + amplitude
            } else {
                baseline - amplitude
            }
        }
        CommandSignal::Ramp { breakpoints } => {
            let first = breakpoints[0];
            let last = breakpoints[breakpoints.len() - 1];
            if t <= first[0] {
                return first[1];
            }
            if t >= last[0] {
                return last[1];
            }
            let w = breakpoints
                .windows(2)
                .find(|w| t < w[1][0])
                .expect("t inside breakpoint span");
            let s = (t - w[0][0]) / (w[1][0] - w[0][0]);
            w[0][1] + s * (w[1][1] - w[0][1])
        }
        CommandSignal::Harmonic {
            offset,
            amplitude,
            frequency,
            phase,
        } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    #[default]
    Ann,
    TrueThrust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub r0_nominal: f64,
    pub actuation_gain: f64,
    /// Defaults to the inlet actuator range when absent.
    pub r0_bounds: Option<[f64; 2]>,
    pub dt: f64,
    /// Seconds; `None` runs until burnout.
    pub duration: Option<f64>,
    pub feedback: FeedbackSource,
    /// Feed the estimator the sensor readings of the previous step.
    pub sensor_delay: bool,
    pub rcac: RcacConfig,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            r0_nominal: 53.58e-3,
            actuation_gain: 1e-3,
            r0_bounds: None,
            dt: 0.01,
            duration: None,
            feedback: FeedbackSource::Ann,
            sensor_delay: false,
            rcac: RcacConfig::default(),
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn bounds(&self, plant: &PlantConfig) -> [f64; 2] {
        self.r0_bounds.unwrap_or([plant.inlet.r0_min, plant.inlet.r0_max])
    }

    pub fn validate(&self, plant: &PlantConfig) -> Result<()> {
        self.rcac.validate()?;
        let [lo, hi] = self.bounds(plant);
        if !(plant.inlet.r0_min <= lo && lo < hi && hi <= plant.inlet.r0_max) {
            return Err(Error::Config(format!(
                "r0_bounds [{lo}, {hi}] must be ordered and inside [{}, {}]",
                plant.inlet.r0_min, plant.inlet.r0_max
            )));
        }
        if !(self.actuation_gain > 0.0) {
            return Err(Error::Config("actuation_gain must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if matches!(self.duration, Some(d) if !(d > 0.0)) {
            return Err(Error::Config("duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: f64,
    pub command: f64,
    pub thrust_true: f64,
    pub thrust_pred: f64,
    pub z: f64,
    pub u: f64,
    pub r0: f64,
    pub gains: [f64; 3],
    pub rdot: f64,
    pub pt4: f64,
    pub r3: f64,
    pub x_co: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Burnout,
    Duration,
}

/// One logged row per controller step. Row `k` holds the plant readings the
/// controller saw at `t_k` and the actuation it issued for the next interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub termination: Termination,
    /// Steps where the requested capture radius was clamped.
    pub saturated_steps: usize,
}

fn check_finite(step: usize, what: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { step, what })
    }
}

pub fn run_closed_loop(
    cfg: &LoopConfig,
    signal: &CommandSignal,
    model: Option<&MlpModel>,
    plant: &Plant,
) -> Result<RunRecord> {
    let pcfg = plant.config();
    cfg.validate(pcfg)?;
    signal.validate()?;
    if cfg.feedback == FeedbackSource::Ann && model.is_none() {
        return Err(Error::Config("ANN feedback requires a trained model".into()));
    }
    let free = freestream_totals(pcfg.mach, pcfg.altitude)?;
    let [lo, hi] = cfg.bounds(pcfg);
    let max_steps = cfg.duration.map(|d| (d / cfg.dt).round() as usize);

    let mut rcac = RcacState::new(&cfg.rcac);
    let mut state = pcfg.initial_state();
    let mut r0_meas = cfg.r0_nominal.clamp(lo, hi);
    let mut meas: CombustorOutputs = plant.evaluate(&state, r0_meas, &free)?;
    let mut meas_prev = meas;
    let mut rows = Vec::new();
    let mut saturated_steps = 0;

    for k in 0.. {
        if max_steps == Some(k) {
            return Ok(RunRecord {
                rows,
                termination: Termination::Duration,
                saturated_steps,
            });
        }
        let t = k as f64 * cfg.dt;
        let command = command_value(signal, t);
        let sensed = if cfg.sensor_delay { &meas_prev } else { &meas };
        let thrust_pred = match (cfg.feedback, model) {
            (FeedbackSource::Ann, Some(m)) => m.forward(&[r0_meas, sensed.pt4, sensed.x_co, pcfg.altitude]),
            _ => meas.thrust,
        };
        check_finite(k, "thrust estimate", thrust_pred)?;
        let step = rcac_pid_step(&mut rcac, &cfg.rcac, command, thrust_pred);
        check_finite(k, "control", step.u)?;
        let requested = cfg.r0_nominal + cfg.actuation_gain * step.u;
        let r0 = requested.clamp(lo, hi);
        if r0 != requested {
            saturated_steps += 1;
        }
        rows.push(RunRow {
            t,
            command,
            thrust_true: meas.thrust,
            thrust_pred,
            z: step.z,
            u: step.u,
            r0,
            gains: rcac.gains(),
            rdot: meas.rdot,
            pt4: meas.pt4,
            r3: state.r3,
            x_co: meas.x_co,
        });
        let next = plant.step(&state, r0, &free, cfg.dt)?;
        check_finite(k, "thrust", next.outputs.thrust)?;
        if next.burnout {
            break;
        }
        state = next.state;
        meas_prev = meas;
        meas = next.outputs;
        r0_meas = r0;
    }
    if saturated_steps > 0 {
        log::info!("capture radius saturated on {saturated_steps} steps");
    }
    Ok(RunRecord {
        rows,
        termination: Termination::Burnout,
        saturated_steps,
    })
}

/// First step after which |z| stays below `band` for the rest of the run.
pub fn settling_step(record: &RunRecord, band: f64) -> Option<usize> {
    let last_out = record.rows.iter().rposition(|r| !(r.z.abs() < band));
    match last_out {
        None => Some(0),
        Some(i) if i + 1 < record.rows.len() => Some(i + 1),
        Some(_) => None,
    }
}

/// Largest excursion of the error past zero, against the sign of the
/// initial error. Zero when the response never crosses the command.
pub fn peak_overshoot(record: &RunRecord) -> f64 {
    let Some(first) = record.rows.iter().find(|r| r.z != 0.0) else {
        return 0.0;
    };
    let s = first.z.signum();
    record.rows.iter().map(|r| -s * r.z).fold(0.0, f64::max)
}

/// Mean |z| over the last quarter of the run.
pub fn final_quarter_mean_abs_error(record: &RunRecord) -> f64 {
    let n = record.rows.len();
    let tail = &record.rows[n - n / 4..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(|r| r.z.abs()).sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub n: f64,
    pub p: f64,
    pub steps: usize,
    pub overshoot: f64,
    pub settling_step: Option<usize>,
    pub max_abs_u: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub record: Option<RunRecord>,
}

/// Step-command runs over every `(N_1, p)` pair; failures are recorded and
/// the sweep continues.
pub fn hyperparameter_sweep(
    base: &LoopConfig,
    signal: &CommandSignal,
    n_values: &[f64],
    p_values: &[f64],
    model: Option<&MlpModel>,
    plant: &Plant,
) -> Vec<SweepRun> {
    let combos: Vec<(f64, f64)> = n_values
        .iter()
        .flat_map(|&n| p_values.iter().map(move |&p| (n, p)))
        .collect();
    let band = 0.02 * signal.peak();
    combos
        .into_par_iter()
        .map(|(n, p)| {
            let mut cfg = base.clone();
            cfg.rcac.p = p;
            cfg.rcac.filter = vec![n];
            match run_closed_loop(&cfg, signal, model, plant) {
                Ok(rec) => SweepRun {
                    n,
                    p,
                    steps: rec.rows.len(),
                    overshoot: peak_overshoot(&rec),
                    settling_step: settling_step(&rec, band),
                    max_abs_u: rec.rows.iter().map(|r| r.u.abs()).fold(0.0, f64::max),
                    error: None,
                    record: Some(rec),
                },
                Err(e) => SweepRun {
                    n,
                    p,
                    steps: 0,
                    overshoot: f64::NAN,
                    settling_step: None,
                    max_abs_u: f64::NAN,
                    error: Some(e.to_string()),
                    record: None,
                },
            }
        })
        .collect()
}

/// Plain-text summary of the trend between covariance size and response.
pub fn sweep_trend_report(runs: &[SweepRun]) -> String {
    let mut out = String::new();
    let mut ns: Vec<f64> = runs.iter().map(|r| r.n).collect();
    ns.dedup();
    for n in ns {
        let mut rs: Vec<&SweepRun> = runs.iter().filter(|r| r.n == n && r.error.is_none()).collect();
        rs.sort_by(|a, b| b.p.total_cmp(&a.p));
        let desc = |r: &&SweepRun| {
            format!(
                "p={:e}: settle={} overshoot={:.2e} N",
                r.p,
                r.settling_step.map_or("none".into(), |s| s.to_string()),
                r.overshoot
            )
        };
        out += &format!("N1={n}: {}\n", rs.iter().map(desc).collect::<Vec<_>>().join("; "));
        if let (Some(big), Some(small)) = (rs.first(), rs.last()) {
            let faster = match (big.settling_step, small.settling_step) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                _ => false,
            };
            out += &format!(
                "  largest p settles no later than smallest p: {faster}; overshoot larger: {}\n",
                big.overshoot >= small.overshoot
            );
        }
    }
    out
}

pub fn write_run_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::with_capacity(160 * (record.rows.len() + 1));
    text.push_str(RUN_CSV_HEADER);
    text.push('\n');
    for r in &record.rows {
        let vals = [
            r.t,
            r.command,
            r.thrust_true,
            r.thrust_pred,
            r.z,
            r.u,
            r.r0,
            r.gains[0],
            r.gains[1],
            r.gains[2],
            r.rdot,
            r.pt4,
            r.r3,
            r.x_co,
        ];
        let line: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Fixed-step defaults of every scenario, editable through the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenarios {
    pub step: CommandSignal,
    pub doublet: CommandSignal,
    pub ramp: CommandSignal,
    pub harmonic: CommandSignal,
}

impl Default for Scenarios {
    fn default() -> Self {
        Scenarios {
            step: CommandSignal::Step {
                amplitude: 100.0,
                t_on: 0.0,
            },
            doublet: CommandSignal::Doublet {
                baseline: 100.0,
                amplitude: 10.0,
                t_on: 30.0,
                half_period: 30.0,
            },
            ramp: CommandSignal::Ramp {
                breakpoints: vec![
                    [0.0, 100.0],
                    [20.0, 100.0],
                    [50.0, 110.0],
                    [80.0, 110.0],
                    [120.0, 90.0],
                    [150.0, 90.0],
                    [170.0, 100.0],
                ],
            },
            harmonic: CommandSignal::Harmonic {
                offset: 100.0,
                amplitude: 10.0,
                frequency: 0.02,
                phase: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Step,
    Doublet,
    Ramp,
    Harmonic,
}

impl Scenarios {
    pub fn get(&self, s: Scenario) -> &CommandSignal {
        match s {
            Scenario::Step => &self.step,
            Scenario::Doublet => &self.doublet,
            Scenario::Ramp => &self.ramp,
            Scenario::Harmonic => &self.harmonic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcacSweepConfig {
    pub n_values: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl Default for RcacSweepConfig {
    fn default() -> Self {
        RcacSweepConfig {
            n_values: vec![0.1, 1.0, 10.0],
            p_values: vec![1e-4, 1e-5, 1e-6, 1e-7],
        }
    }
}

/// Everything a CLI run needs; unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub plant: PlantConfig,
    /// Grid resolution for dataset generation and ANN sweeps.
    pub points_per_axis: usize,
    /// Grid resolution used when a closed-loop run must train its own model.
    pub feedback_points_per_axis: usize,
    pub train: TrainConfig,
    pub ann_sweep: SweepGrid,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub scenarios: Scenarios,
    pub rcac_sweep: RcacSweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plant: PlantConfig::default(),
            points_per_axis: 20,
            feedback_points_per_axis: 50,
            train: TrainConfig::default(),
            ann_sweep: SweepGrid::default(),
            loop_: LoopConfig::default(),
            scenarios: Scenarios::default(),
            rcac_sweep: RcacSweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.train.validate()?;
        self.loop_.validate(&self.plant)?;
        for s in [Scenario::Step, Scenario::Doublet, Scenario::Ramp, Scenario::Harmonic] {
            self.scenarios.get(s).validate()?;
        }
        if self.points_per_axis < 2 || self.feedback_points_per_axis < 2 {
            return Err(Error::Config("grid resolutions must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub git_describe: String,
    pub config: RunConfig,
    /// Free-form results and notes (termination reason, metrics, files).
    pub details: serde_json::Value,
}

/// `git describe --always --dirty`, or `"unknown"` outside a repository.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Thrust/command, r0, log10|z|, gains, regression rate and Pt4 panels.
pub fn write_run_plots(record: &RunRecord, path: &Path, title: &str) -> Result<()> {
    let t: Vec<f64> = record.rows.iter().map(|r| r.t).collect();
    let col =
        |f: fn(&RunRow) -> f64| -> Vec<(f64, f64)> { t.iter().zip(&record.rows).map(|(&t, r)| (t, f(r))).collect() };
    let panels = vec![
        plot::Panel {
            title: "thrust [N]".into(),
            series: vec![
                Series::new("command", col(|r| r.command)),
                Series::new("true", col(|r| r.thrust_true)),
                Series::new("estimate", col(|r| r.thrust_pred)),
            ],
        },
        plot::Panel {
            title: "capture radius r0 [mm]".into(),
            series: vec![Series::new("r0", col(|r| r.r0 * 1e3))],
        },
        plot::Panel {
            title: "log10 |z| [N]".into(),
            series: vec![Series::new("z", col(|r| r.z.abs().max(1e-12).log10()))],
        },
        plot::Panel {
            title: "PID gains".into(),
            series: vec![
                Series::new("Kp", col(|r| r.gains[0])),
                Series::new("Ki", col(|r| r.gains[1])),
                Series::new("Kd", col(|r| r.gains[2])),
            ],
        },
        plot::Panel {
            title: "regression rate [mm/s]".into(),
            series: vec![Series::new("rdot", col(|r| r.rdot * 1e3))],
        },
        plot::Panel {
            title: "Pt4 [kPa]".into(),
            series: vec![Series::new("Pt4", col(|r| r.pt4 * 1e-3))],
        },
    ];
    plot::panels_svg(path, title, "t [s]", &panels, 2)
}

/// Writes `run.csv`, `manifest.json` and `run.svg` into `out_dir`.
pub fn emit_outputs(record: &RunRecord, out_dir: &Path, manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join("run.csv");
    let json = out_dir.join("manifest.json");
    let svg = out_dir.join("run.svg");
    write_run_csv(record, &csv)?;
    write_manifest(manifest, &json)?;
    write_run_plots(record, &svg, &manifest.command)?;
    Ok(vec![csv, json, svg])
}
