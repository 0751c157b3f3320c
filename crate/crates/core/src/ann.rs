//! Thrust surrogate: synthetic dataset generation from static plant
//! evaluations and a small fully connected network trained with Adam.
//!
//! Inputs are `(r0, Pt4, X_CO, H)` in SI units, the output is net thrust in
//! newtons. Both sides are min-max scaled to [0, 1] using statistics of the
//! training split, and the scalers travel with the serialized model.

use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atmosphere::freestream_totals;
use crate::combustor::{Plant, PlantState};
use crate::error::{Error, Result};

pub const N_INPUTS: usize = 4;
pub const MIN_ALTITUDE: f64 = 10_000.0;
pub const MAX_ALTITUDE: f64 = 40_000.0;

const SPLIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    #[serde(rename = "r0_m")]
    pub r0: f64,
    #[serde(rename = "Pt4_Pa")]
    pub pt4: f64,
    #[serde(rename = "X_CO")]
    pub x_co: f64,
    #[serde(rename = "H_m")]
    pub altitude: f64,
    #[serde(rename = "thrust_N")]
    pub thrust: f64,
}

impl DataRow {
    pub fn inputs(&self) -> [f64; N_INPUTS] {
        [self.r0, self.pt4, self.x_co, self.altitude]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<DataRow>,
    /// `(nH, nr0, nr3)` when generated on a grid.
    pub grid_shape: Option<(usize, usize, usize)>,
    /// Grid points whose plant evaluation failed.
    pub excluded: usize,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Evaluates the plant on a uniform `(H, r0, r3)` grid with altitude as the
/// slowest and port radius as the fastest varying index.
pub fn generate_dataset(points_per_axis: usize, plant: &Plant) -> Result<Dataset> {
    if points_per_axis < 2 {
        return Err(Error::Domain(format!(
            "points_per_axis must be at least 2, got {points_per_axis}"
        )));
    }
    let cfg = plant.config();
    let n = points_per_axis;
    let hs = linspace(MIN_ALTITUDE, MAX_ALTITUDE, n);
    let r0s = linspace(cfg.inlet.r0_min, cfg.inlet.r0_max, n);
    let r3s = linspace(cfg.r3_initial, cfg.r3_max, n);
    let frees = hs
        .iter()
        .map(|&h| freestream_totals(cfg.mach, h))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<Result<DataRow>> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (ih, ir0, ir3) = (idx / (n * n), (idx / n) % n, idx % n);
            let state = PlantState {
                r3: r3s[ir3],
                p4_lag: None,
            };
            let out = plant.evaluate(&state, r0s[ir0], &frees[ih])?;
            Ok(DataRow {
                r0: r0s[ir0],
                pt4: out.pt4,
                x_co: out.x_co,
                altitude: hs[ih],
                thrust: out.thrust,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut excluded = 0;
    for r in results {
        match r {
            Ok(row) if row.thrust.is_finite() => rows.push(row),
            Ok(_) => excluded += 1,
            Err(e) => {
                log::warn!("grid point excluded: {e}");
                excluded += 1;
            }
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} of {} grid points excluded", n * n * n);
    }
    Ok(Dataset {
        rows,
        grid_shape: Some((n, n, n)),
        excluded,
    })
}

pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if data.rows.is_empty() {
        w.write_record(["r0_m", "Pt4_Pa", "X_CO", "H_m", "thrust_N"])?;
    }
    for row in &data.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let rows = r.deserialize().collect::<std::result::Result<Vec<DataRow>, _>>()?;
    Ok(Dataset {
        rows,
        grid_shape: None,
        excluded: 0,
    })
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::Domain("mse of empty vectors".into()));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,
}

const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
        Activation::LeakyRelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leakyrelu",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `a`.
    fn derivative(self, x: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub const IDENTITY: Scaler = Scaler { min: 0.0, max: 1.0 };

    /// Range of `values`; a constant column gets unit width so scaling
    /// stays defined.
    pub fn fit(values: impl Iterator<Item = f64>) -> Scaler {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if max > min {
            Scaler { min, max }
        } else {
            Scaler { min, max: min + 1.0 }
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Fully connected network; the activation is applied on every layer,
/// including the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Layer>,
    pub input_scaler: Vec<Scaler>,
    pub output_scaler: Scaler,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
}

/// Parameter-shaped container for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn fill(&mut self, v: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .for_each(|x| x.fill(v));
    }
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-limit..limit)).collect(),
                    biases: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            layers,
            input_scaler: vec![Scaler::IDENTITY; layer_sizes[0]],
            output_scaler: Scaler::IDENTITY,
            train_config: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok_layers = self.layers.len() + 1 == self.layer_sizes.len()
            && self.layers.iter().zip(self.layer_sizes.windows(2)).all(|(l, w)| {
                l.inputs == w[0] && l.outputs == w[1] && l.weights.len() == w[0] * w[1] && l.biases.len() == w[1]
            });
        if !ok_layers || self.layer_sizes.last() != Some(&1) || self.input_scaler.len() != self.layer_sizes[0] {
            return Err(Error::Config("model dimensions are inconsistent".into()));
        }
        if self
            .input_scaler
            .iter()
            .chain(std::iter::once(&self.output_scaler))
            .any(|s| !(s.min < s.max))
        {
            return Err(Error::Config("model scaler has min >= max".into()));
        }
        Ok(())
    }

    /// Network output in normalized units.
    pub fn forward_normalized(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = (0..layer.outputs)
                .map(|o| {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let z = layer.biases[o] + row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
                    self.activation.apply(z)
                })
                .collect();
        }
        a[0]
    }

    pub fn scale_inputs(&self, input: &[f64; N_INPUTS]) -> Vec<f64> {
        input.iter().zip(&self.input_scaler).map(|(v, s)| s.scale(*v)).collect()
    }

    /// Thrust estimate in newtons from raw `(r0, Pt4, X_CO, H)`.
    pub fn forward(&self, input: &[f64; N_INPUTS]) -> f64 {
        self.output_scaler
            .unscale(self.forward_normalized(&self.scale_inputs(input)))
    }

    /// Mean squared error over normalized samples, with its gradient.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Gradients) {
        let mut grad = Gradients::zeros_like(self);
        let loss = self.accumulate_gradient(xs.iter().map(|x| x.as_slice()).zip(ys.iter().copied()), &mut grad);
        (loss, grad)
    }

    fn accumulate_gradient<'a>(
        &self,
        batch: impl ExactSizeIterator<Item = (&'a [f64], f64)>,
        grad: &mut Gradients,
    ) -> f64 {
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let nl = self.layers.len();
        // activations per layer, index 0 = input
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); nl + 1];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); nl];
        for (x, y) in batch {
            acts[0].clear();
            acts[0].extend_from_slice(x);
            for (l, layer) in self.layers.iter().enumerate() {
                let (lo, hi) = acts.split_at_mut(l + 1);
                let input = &lo[l];
                pre[l].clear();
                hi[0].clear();
                for o in 0..layer.outputs {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let z = layer.biases[o] + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
                    pre[l].push(z);
                    hi[0].push(self.activation.apply(z));
                }
            }
            let err = acts[nl][0] - y;
            loss += err * err;
            // dL/da for the output layer
            let mut delta = vec![2.0 * err / n];
            for l in (0..nl).rev() {
                let layer = &self.layers[l];
                for (o, d) in delta.iter_mut().enumerate() {
                    *d *= self.activation.derivative(pre[l][o], acts[l + 1][o]);
                }
                let mut next = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    grad.biases[l][o] += d;
                    let row = o * layer.inputs;
                    for i in 0..layer.inputs {
                        grad.weights[l][row + i] += d * acts[l][i];
                        next[i] += d * layer.weights[row + i];
                    }
                }
                delta = next;
            }
        }
        loss / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_nodes: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fraction of rows used for training; the rest is the test split.
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_nodes: 20,
            activation: Activation::Sigmoid,
            batch_size: 100,
            epochs: 100,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            split_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction {} not in (0, 1)",
                self.split_fraction
            )));
        }
        if self.batch_size == 0 || self.hidden_nodes == 0 {
            return Err(Error::Config("batch_size and hidden_nodes must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        vec![N_INPUTS, self.hidden_nodes, 1]
    }
}

/// Per-epoch normalized MSE; index 0 holds the losses before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    t: i32,
}

impl Adam {
    fn new(cfg: &TrainConfig) -> Self {
        Adam {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            lr: cfg.learning_rate,
            t: 0,
        }
    }

    /// Advances the step counter; returns the bias corrections.
    fn tick(&mut self) -> (f64, f64) {
        self.t += 1;
        (1.0 - self.beta1.powi(self.t), 1.0 - self.beta2.powi(self.t))
    }

    fn update(&self, params: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], (c1, c2): (f64, f64)) {
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Train/test split of a dataset after a seeded shuffle.
pub fn split_indices(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let test = idx.split_off(n_train);
    (idx, test)
}

fn normalized_loss(model: &MlpModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = model.forward_normalized(x) - y;
            e * e
        })
        .sum::<f64>()
        / xs.len() as f64
}

/// Builds a network per `cfg` and trains it on `data`.
pub fn train_new(data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, LossHistory)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = MlpModel::new(&cfg.layer_sizes(), cfg.activation, &mut rng)?;
    train(model, data, cfg)
}

/// Mini-batch Adam on normalized MSE. Scalers are refit on the training
/// split. Deterministic for a given seed.
pub fn train(mut model: MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, LossHistory)> {
    cfg.validate()?;
    if data.rows.is_empty() {
        return Err(Error::Domain("cannot train on an empty dataset".into()));
    }
    if model.layer_sizes.first() != Some(&N_INPUTS) || model.layer_sizes.last() != Some(&1) {
        return Err(Error::Config(format!("model must map {N_INPUTS} inputs to 1 output")));
    }
    // separate stream from weight initialization so the split does not
    // depend on network size
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SPLIT_STREAM);
    let (train_idx, test_idx) = split_indices(data.rows.len(), cfg.split_fraction, &mut rng);

    model.input_scaler = (0..N_INPUTS)
        .map(|j| Scaler::fit(train_idx.iter().map(|&i| data.rows[i].inputs()[j])))
        .collect();
    model.output_scaler = Scaler::fit(train_idx.iter().map(|&i| data.rows[i].thrust));
    model.train_config = Some(cfg.clone());

    let prep = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        idx.iter()
            .map(|&i| {
                let r = &data.rows[i];
                (model.scale_inputs(&r.inputs()), model.output_scaler.scale(r.thrust))
            })
            .unzip()
    };
    let (xtr, ytr) = prep(&train_idx);
    let (xte, yte) = prep(&test_idx);

    let mut adam = Adam::new(cfg);
    let mut grad = Gradients::zeros_like(&model);
    let mut m = Gradients::zeros_like(&model);
    let mut v = Gradients::zeros_like(&model);
    let mut history = LossHistory {
        train: vec![normalized_loss(&model, &xtr, &ytr)],
        test: vec![normalized_loss(&model, &xte, &yte)],
    };
    let mut order: Vec<usize> = (0..xtr.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            model.accumulate_gradient(batch.iter().map(|&i| (xtr[i].as_slice(), ytr[i])), &mut grad);
            let corr = adam.tick();
            for (l, layer) in model.layers.iter_mut().enumerate() {
                adam.update(
                    &mut layer.weights,
                    &grad.weights[l],
                    &mut m.weights[l],
                    &mut v.weights[l],
                    corr,
                );
                adam.update(
                    &mut layer.biases,
                    &grad.biases[l],
                    &mut m.biases[l],
                    &mut v.biases[l],
                    corr,
                );
            }
        }
        let tr = normalized_loss(&model, &xtr, &ytr);
        let te = if xte.is_empty() {
            f64::NAN
        } else {
            normalized_loss(&model, &xte, &yte)
        };
        if !tr.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: train {tr:.3e} test {te:.3e}");
        history.train.push(tr);
        history.test.push(te);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: usize,
    pub mse_normalized: f64,
    pub rmse_n: f64,
    pub max_abs_error_n: f64,
}

pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<EvalReport> {
    let pred: Vec<f64> = data.rows.iter().map(|r| model.forward(&r.inputs())).collect();
    let truth: Vec<f64> = data.rows.iter().map(|r| r.thrust).collect();
    let raw = mse(&truth, &pred)?;
    let width = model.output_scaler.max - model.output_scaler.min;
    Ok(EvalReport {
        rows: truth.len(),
        mse_normalized: raw / (width * width),
        rmse_n: raw.sqrt(),
        max_abs_error_n: truth.iter().zip(&pred).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    })
}

/// Lists of values for each swept factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub nodes: Vec<usize>,
    pub activation: Vec<Activation>,
    pub batch: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            nodes: vec![5, 10, 20, 40],
            activation: Activation::ALL.to_vec(),
            batch: vec![25, 50, 100, 200],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Factor varied in this run: `nodes`, `activation` or `batch`.
    pub factor: String,
    /// Case letter along that factor, A for the first listed value.
    pub case: char,
    pub hidden_nodes: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub history: LossHistory,
    pub error: Option<String>,
}

/// One-factor-at-a-time sweep around `base`. Duplicate configurations are
/// trained once and reported under the first factor that produced them.
pub fn sensitivity_sweep(data: &Dataset, base: &TrainConfig, grid: &SweepGrid) -> Vec<SweepRow> {
    let mut cases: Vec<(String, char, TrainConfig)> = Vec::new();
    let letter = |i: usize| (b'A' + i as u8) as char;
    for (i, &n) in grid.nodes.iter().enumerate() {
        cases.push((
            "nodes".into(),
            letter(i),
            TrainConfig {
                hidden_nodes: n,
                ..base.clone()
            },
        ));
    }
    for (i, &a) in grid.activation.iter().enumerate() {
        cases.push((
            "activation".into(),
            letter(i),
            TrainConfig {
                activation: a,
                ..base.clone()
            },
        ));
    }
    for (i, &b) in grid.batch.iter().enumerate() {
        cases.push((
            "batch".into(),
            letter(i),
            TrainConfig {
                batch_size: b,
                ..base.clone()
            },
        ));
    }
    let mut unique: Vec<(String, char, TrainConfig)> = Vec::new();
    for c in cases {
        if !unique.iter().any(|u| u.2 == c.2) {
            unique.push(c);
        }
    }
    unique
        .into_par_iter()
        .map(|(factor, case, cfg)| {
            let (history, error) = match train_new(data, &cfg) {
                Ok((_, h)) => (h, None),
                Err(e) => (LossHistory::default(), Some(e.to_string())),
            };
            SweepRow {
                factor,
                case,
                hidden_nodes: cfg.hidden_nodes,
                activation: cfg.activation,
                batch_size: cfg.batch_size,
                final_train_loss: history.train.last().copied().unwrap_or(f64::NAN),
                final_test_loss: history.test.last().copied().unwrap_or(f64::NAN),
                history,
                error,
            }
        })
        .collect()
}
