use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sfrj::ann::{self, Dataset, MlpModel};
use sfrj::combustor::Plant;
use sfrj::harness::{self, FeedbackSource, RunConfig, RunManifest, Scenario};
use sfrj::plot::{self, Panel, Series};

#[derive(Parser)]
#[command(
    name = "sfrj",
    version,
    about = "Solid-fuel ramjet thrust control with an adaptive PID and a neural thrust estimate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the training and loop seeds of the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Grid points per axis for dataset generation
    #[arg(long)]
    points_per_axis: Option<usize>,
}

#[derive(Args, Clone)]
struct DataArg {
    /// Existing dataset CSV instead of generating one
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct LoopArgs {
    #[arg(long, value_enum, default_value = "step")]
    scenario: ScenarioArg,
    /// Thrust feedback; defaults to the configuration value
    #[arg(long, value_enum)]
    feedback: Option<FeedbackArg>,
    /// Trained model JSON; trained on the fly when ANN feedback needs one
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the plant on an (H, r0, r3) grid and write the dataset CSV
    GenData(Common),
    /// Train the thrust estimator
    TrainAnn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Score a trained model against a dataset
    EvalAnn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run one closed-loop scenario
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: LoopArgs,
    },
    /// Hidden-node, activation and batch-size sensitivity study
    SweepAnn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Closed-loop runs over the filter coefficient and covariance grid
    SweepRcac {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: LoopArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Step,
    Doublet,
    Ramp,
    Harmonic,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Step => Scenario::Step,
            ScenarioArg::Doublet => Scenario::Doublet,
            ScenarioArg::Ramp => Scenario::Ramp,
            ScenarioArg::Harmonic => Scenario::Harmonic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    Ann,
    True,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    plant: Plant,
    points_override: Option<usize>,
}

impl Ctx {
    fn new(common: &Common) -> Result<Ctx> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.train.seed = seed;
            cfg.loop_.seed = seed;
        }
        if let Some(n) = common.points_per_axis {
            cfg.points_per_axis = n;
        }
        cfg.validate()?;
        fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
        Ok(Ctx {
            plant: Plant::new(cfg.plant.clone())?,
            cfg,
            out: common.out.clone(),
            points_override: common.points_per_axis,
        })
    }

    fn dataset(&self, data: &DataArg, points: usize) -> Result<Dataset> {
        match &data.data {
            Some(p) => Ok(ann::read_dataset_csv(p)?),
            None => {
                log::info!("generating {points}^3 dataset");
                let d = ann::generate_dataset(points, &self.plant)?;
                if d.excluded > 0 {
                    log::warn!("{} grid points failed and were excluded", d.excluded);
                }
                Ok(d)
            }
        }
    }

    fn manifest(&self, command: &str, details: serde_json::Value) -> Result<()> {
        let m = RunManifest {
            command: command.into(),
            seed: self.cfg.train.seed,
            git_describe: harness::git_describe(),
            config: self.cfg.clone(),
            details,
        };
        harness::write_manifest(&m, &self.out.join("manifest.json"))?;
        Ok(())
    }

    fn train(&self, data: &Dataset) -> Result<(MlpModel, ann::LossHistory)> {
        let (model, hist) = ann::train_new(data, &self.cfg.train)?;
        let path = self.out.join("model.json");
        fs::write(&path, serde_json::to_string_pretty(&model)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        let mut text = String::from("epoch,train_mse,test_mse\n");
        for (i, (a, b)) in hist.train.iter().zip(&hist.test).enumerate() {
            writeln!(text, "{i},{a:e},{b:e}")?;
        }
        fs::write(self.out.join("losses.csv"), text)?;
        let pts = |v: &[f64]| v.iter().enumerate().map(|(i, l)| (i as f64, l.log10())).collect();
        plot::panels_svg(
            &self.out.join("losses.svg"),
            "training history",
            "epoch",
            &[Panel {
                title: "log10 normalized MSE".into(),
                series: vec![
                    Series::new("train", pts(&hist.train)),
                    Series::new("test", pts(&hist.test)),
                ],
            }],
            1,
        )?;
        Ok((model, hist))
    }

    /// Model for closed-loop runs: loaded, or trained on the feedback grid.
    fn feedback_model(&self, run: &LoopArgs, feedback: FeedbackSource) -> Result<Option<MlpModel>> {
        if feedback != FeedbackSource::Ann {
            return Ok(None);
        }
        if let Some(p) = &run.model {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let m: MlpModel = serde_json::from_str(&text)?;
            m.validate()?;
            return Ok(Some(m));
        }
        let points = self.points_override.unwrap_or(self.cfg.feedback_points_per_axis);
        let data = self.dataset(&DataArg { data: None }, points)?;
        Ok(Some(self.train(&data)?.0))
    }

    fn feedback(&self, run: &LoopArgs) -> FeedbackSource {
        match run.feedback {
            Some(FeedbackArg::Ann) => FeedbackSource::Ann,
            Some(FeedbackArg::True) => FeedbackSource::TrueThrust,
            None => self.cfg.loop_.feedback,
        }
    }
}

fn gen_data(common: &Common) -> Result<()> {
    let ctx = Ctx::new(common)?;
    let data = ctx.dataset(&DataArg { data: None }, ctx.cfg.points_per_axis)?;
    let path = ctx.out.join("dataset.csv");
    ann::write_dataset_csv(&data, &path)?;
    ctx.manifest(
        "gen-data",
        json!({ "rows": data.rows.len(), "excluded": data.excluded, "grid_shape": data.grid_shape }),
    )?;
    println!("wrote {} rows to {}", data.rows.len(), path.display());
    Ok(())
}

fn train_ann(common: &Common, data: &DataArg) -> Result<()> {
    let ctx = Ctx::new(common)?;
    let dataset = ctx.dataset(data, ctx.cfg.points_per_axis)?;
    let (_, hist) = ctx.train(&dataset)?;
    let (tr, te) = (hist.train.last().unwrap(), hist.test.last().unwrap());
    ctx.manifest(
        "train-ann",
        json!({ "rows": dataset.rows.len(), "final_train_mse": tr, "final_test_mse": te }),
    )?;
    println!("final normalized MSE: train {tr:.3e}, test {te:.3e}");
    Ok(())
}

fn eval_ann(common: &Common, data: &DataArg, model_path: &Path) -> Result<()> {
    let ctx = Ctx::new(common)?;
    let model: MlpModel = serde_json::from_str(
        &fs::read_to_string(model_path).with_context(|| format!("reading {}", model_path.display()))?,
    )?;
    model.validate()?;
    let dataset = ctx.dataset(data, ctx.cfg.points_per_axis)?;
    let report = ann::evaluate(&model, &dataset)?;
    let mut text = String::from("r0_m,Pt4_Pa,X_CO,H_m,thrust_N,thrust_pred_N\n");
    for r in &dataset.rows {
        let p = model.forward(&r.inputs());
        writeln!(
            text,
            "{:e},{:e},{:e},{:e},{:e},{p:e}",
            r.r0, r.pt4, r.x_co, r.altitude, r.thrust
        )?;
    }
    fs::write(ctx.out.join("predictions.csv"), text)?;
    ctx.manifest("eval-ann", serde_json::to_value(report)?)?;
    println!(
        "rows {}: normalized MSE {:.3e}, RMSE {:.3} N, max error {:.3} N",
        report.rows, report.mse_normalized, report.rmse_n, report.max_abs_error_n
    );
    Ok(())
}

fn simulate(common: &Common, run: &LoopArgs) -> Result<()> {
    let ctx = Ctx::new(common)?;
    let mut loop_cfg = ctx.cfg.loop_.clone();
    loop_cfg.feedback = ctx.feedback(run);
    let model = ctx.feedback_model(run, loop_cfg.feedback)?;
    let scenario: Scenario = run.scenario.into();
    let signal = ctx.cfg.scenarios.get(scenario);
    let record = harness::run_closed_loop(&loop_cfg, signal, model.as_ref(), &ctx.plant)?;
    let band = 0.02 * signal.peak();
    let details = json!({
        "scenario": scenario,
        "feedback": loop_cfg.feedback,
        "signal": signal,
        "steps": record.rows.len(),
        "termination": record.termination,
        "saturated_steps": record.saturated_steps,
        "settling_step": harness::settling_step(&record, band),
        "peak_overshoot_N": harness::peak_overshoot(&record),
        "final_quarter_mean_abs_z_N": harness::final_quarter_mean_abs_error(&record),
    });
    let m = RunManifest {
        command: format!("simulate {scenario:?}").to_lowercase(),
        seed: loop_cfg.seed,
        git_describe: harness::git_describe(),
        config: ctx.cfg.clone(),
        details: details.clone(),
    };
    harness::emit_outputs(&record, &ctx.out, &m)?;
    println!("{}", serde_json::to_string_pretty(&details)?);
    Ok(())
}

fn sweep_ann(common: &Common, data: &DataArg) -> Result<()> {
    let ctx = Ctx::new(common)?;
    let dataset = ctx.dataset(data, ctx.cfg.points_per_axis)?;
    let rows = ann::sensitivity_sweep(&dataset, &ctx.cfg.train, &ctx.cfg.ann_sweep);
    let mut text =
        String::from("factor,case,hidden_nodes,activation,batch_size,final_train_mse,final_test_mse,error\n");
    for r in &rows {
        writeln!(
            text,
            "{},{},{},{},{},{:e},{:e},{}",
            r.factor,
            r.case,
            r.hidden_nodes,
            r.activation.name(),
            r.batch_size,
            r.final_train_loss,
            r.final_test_loss,
            r.error.as_deref().unwrap_or("")
        )?;
    }
    fs::write(ctx.out.join("ann_sweep.csv"), &text)?;
    let panels: Vec<Panel> = ["nodes", "activation", "batch"]
        .iter()
        .map(|factor| Panel {
            title: format!("log10 train MSE, {factor}"),
            series: rows
                .iter()
                .filter(|r| &r.factor == factor)
                .map(|r| {
                    let label = match *factor {
                        "nodes" => format!("{} {}", r.case, r.hidden_nodes),
                        "activation" => format!("{} {}", r.case, r.activation.name()),
                        _ => format!("{} {}", r.case, r.batch_size),
                    };
                    Series::new(
                        &label,
                        r.history
                            .train
                            .iter()
                            .enumerate()
                            .map(|(i, l)| (i as f64, l.log10()))
                            .collect(),
                    )
                })
                .collect(),
        })
        .collect();
    plot::panels_svg(
        &ctx.out.join("ann_sweep.svg"),
        "hyperparameter sensitivity",
        "epoch",
        &panels,
        3,
    )?;
    ctx.manifest("sweep-ann", json!({ "rows": dataset.rows.len(), "runs": rows.len() }))?;
    print!("{text}");
    Ok(())
}

fn sweep_rcac(common: &Common, run: &LoopArgs) -> Result<()> {
    let ctx = Ctx::new(common)?;
    let mut base = ctx.cfg.loop_.clone();
    base.feedback = ctx.feedback(run);
    let model = ctx.feedback_model(run, base.feedback)?;
    let signal = ctx.cfg.scenarios.get(run.scenario.into());
    let sw = &ctx.cfg.rcac_sweep;
    if sw.n_values.is_empty() || sw.p_values.is_empty() {
        bail!("rcac_sweep needs at least one n and one p value");
    }
    let runs = harness::hyperparameter_sweep(&base, signal, &sw.n_values, &sw.p_values, model.as_ref(), &ctx.plant);
    let run_dir = ctx.out.join("runs");
    fs::create_dir_all(&run_dir)?;
    let mut text = String::from("n,p,steps,overshoot_N,settling_step,max_abs_u,error\n");
    for r in &runs {
        if let Some(rec) = &r.record {
            harness::write_run_csv(rec, &run_dir.join(format!("n{}_p{:e}.csv", r.n, r.p)))?;
        }
        writeln!(
            text,
            "{},{:e},{},{:e},{},{:e},{}",
            r.n,
            r.p,
            r.steps,
            r.overshoot,
            r.settling_step.map_or(String::new(), |s| s.to_string()),
            r.max_abs_u,
            r.error.as_deref().unwrap_or("")
        )?;
    }
    fs::write(ctx.out.join("rcac_sweep.csv"), &text)?;
    let panels: Vec<Panel> = sw
        .n_values
        .iter()
        .map(|&n| Panel {
            title: format!("thrust estimate [N], N1 = {n}"),
            series: runs
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| {
                    let rec = r.record.as_ref()?;
                    Some(Series::new(
                        &format!("p={:e}", r.p),
                        rec.rows.iter().map(|row| (row.t, row.thrust_pred)).collect(),
                    ))
                })
                .collect(),
        })
        .collect();
    plot::panels_svg(
        &ctx.out.join("rcac_sweep.svg"),
        "adaptive PID hyperparameters",
        "t [s]",
        &panels,
        1,
    )?;
    let report = harness::sweep_trend_report(&runs);
    ctx.manifest(
        "sweep-rcac",
        json!({ "feedback": base.feedback, "signal": signal, "trend": report }),
    )?;
    print!("{text}\n{report}");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenData(c) => gen_data(&c),
        Command::TrainAnn { common, data } => train_ann(&common, &data),
        Command::EvalAnn { common, data, model } => eval_ann(&common, &data, &model),
        Command::Simulate { common, run } => simulate(&common, &run),
        Command::SweepAnn { common, data } => sweep_ann(&common, &data),
        Command::SweepRcac { common, run } => sweep_rcac(&common, &run),
    }
}
