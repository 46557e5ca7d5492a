//! Feed-forward ReLU network for the conditional second moment, trained by
//! mini-batch first-order methods with hand-written backpropagation.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::RegressionData;
use crate::rng::{self, Domain};

/// Samples per gradient work unit. Chunk partials are summed in chunk order,
/// so the gradient does not depend on the thread count.
const GRAD_CHUNK: usize = 64;

/// Layer widths `[d_in, N_1, ..., N_L, 1]`; ReLU on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, seed: u64) -> Result<Self> {
        let spec = Self { widths, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::invalid("nn.widths", "need an input, at least one hidden layer and an output"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("nn.widths", "all widths must be at least 1"));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(Error::invalid("nn.widths", "output width must be 1"));
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.widths[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.n_in).zip(&self.bias)) {
            *o = b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect() }
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    fn scale(&mut self, c: f64) {
        self.iter_mut().for_each(|a| *a *= c);
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
pub fn init_params(spec: &MlpSpec) -> Result<MlpParams> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Domain::NetInit, &[]);
    let layers = spec
        .widths
        .windows(2)
        .map(|w| {
            let (n_in, n_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
            let weights = (0..n_in * n_out).map(|_| normal.sample(&mut rng)).collect();
            Layer { n_in, n_out, weights, bias: vec![0.0; n_out] }
        })
        .collect();
    Ok(MlpParams { layers })
}

fn check_batch(params: &MlpParams, x: &[f64]) -> Result<usize> {
    let d = params.d_in();
    if x.len() % d != 0 {
        return Err(Error::invalid("x", format!("batch length {} is not a multiple of d_in = {d}", x.len())));
    }
    Ok(x.len() / d)
}

/// Per-layer scratch space reused across the samples of a chunk.
struct Workspace {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn new(params: &MlpParams) -> Self {
        let mut acts = vec![vec![0.0; params.d_in()]];
        acts.extend(params.layers.iter().map(|l| vec![0.0; l.n_out]));
        let pre = params.layers.iter().map(|l| vec![0.0; l.n_out]).collect();
        let widest = params.layers.iter().map(|l| l.n_in.max(l.n_out)).max().unwrap_or(1);
        Self { acts, pre, delta: Vec::with_capacity(widest), delta_prev: Vec::with_capacity(widest) }
    }

    fn forward(&mut self, params: &MlpParams, input: &[f64]) -> f64 {
        self.acts[0].copy_from_slice(input);
        let last = params.layers.len() - 1;
        for (i, layer) in params.layers.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(i + 1);
            layer.affine(&head[i], &mut self.pre[i]);
            for (a, &z) in tail[0].iter_mut().zip(&self.pre[i]) {
                *a = if i < last { z.max(0.0) } else { z };
            }
        }
        self.acts[last + 1][0]
    }
}

/// Network output for a row-major batch of `d_in`-wide inputs.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    check_batch(params, x)?;
    let d = params.d_in();
    Ok(x
        .par_chunks(GRAD_CHUNK * d)
        .flat_map_iter(|chunk| {
            let mut ws = Workspace::new(params);
            chunk.chunks_exact(d).map(|row| ws.forward(params, row)).collect::<Vec<_>>()
        })
        .collect())
}

/// Hidden-layer pre-activations of one input, for kink checks.
pub fn pre_activations(params: &MlpParams, input: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut a = input.to_vec();
    for layer in &params.layers[..params.layers.len() - 1] {
        let mut z = vec![0.0; layer.n_out];
        layer.affine(&a, &mut z);
        out.extend_from_slice(&z);
        a = z.iter().map(|v| v.max(0.0)).collect();
    }
    out
}

/// Sum of squared errors and its gradient over one chunk.
fn chunk_sse_grad(params: &MlpParams, x: &[f64], y: &[f64]) -> (f64, MlpParams) {
    let d = params.d_in();
    let n_layers = params.layers.len();
    let mut grad = params.zeros_like();
    let mut ws = Workspace::new(params);
    let mut sse = 0.0;
    for (input, &target) in x.chunks_exact(d).zip(y) {
        let err = ws.forward(params, input) - target;
        sse += err * err;

        ws.delta.clear();
        ws.delta.push(2.0 * err);
        for i in (0..n_layers).rev() {
            let layer = &params.layers[i];
            let g = &mut grad.layers[i];
            let a_prev = &ws.acts[i];
            for (o, &dz) in ws.delta.iter().enumerate() {
                g.bias[o] += dz;
                for (gw, &a) in g.weights[o * layer.n_in..(o + 1) * layer.n_in].iter_mut().zip(a_prev) {
                    *gw += dz * a;
                }
            }
            if i == 0 {
                break;
            }
            let z_prev = &ws.pre[i - 1];
            ws.delta_prev.clear();
            ws.delta_prev.extend((0..layer.n_in).map(|j| {
                // ReLU'(0) = 0
                if z_prev[j] > 0.0 {
                    ws.delta.iter().enumerate().map(|(o, &dz)| dz * layer.weights[o * layer.n_in + j]).sum()
                } else {
                    0.0
                }
            }));
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
    (sse, grad)
}

/// Mean squared error and its exact gradient; ReLU'(0) is taken as 0.
pub fn loss_and_gradients(params: &MlpParams, x: &[f64], y: &[f64]) -> Result<(f64, MlpParams)> {
    let n = check_batch(params, x)?;
    if n == 0 || n != y.len() {
        return Err(Error::invalid("batch", "must be non-empty with one target per input row"));
    }
    let d = params.d_in();
    let partials: Vec<(f64, MlpParams)> = x
        .par_chunks(GRAD_CHUNK * d)
        .zip(y.par_chunks(GRAD_CHUNK))
        .map(|(xc, yc)| chunk_sse_grad(params, xc, yc))
        .collect();
    let mut grad = params.zeros_like();
    let mut sse = 0.0;
    for (s, g) in &partials {
        sse += s;
        grad.add_assign(g);
    }
    grad.scale(1.0 / n as f64);
    Ok((sse / n as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub standardize_inputs: bool,
    pub standardize_targets: bool,
    /// Epochs without improvement of the full-sample MSE before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            standardize_inputs: true,
            standardize_targets: true,
            patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::invalid("nn.train", "epochs, batch_size and patience must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("nn.train.learning_rate", "must be positive"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::invalid("nn.train.optimizer", "betas must lie in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full-sample training MSE in target units.
    pub mse: f64,
}

/// Affine map applied before the network (inputs) or after it (targets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

impl Standardization {
    const IDENTITY: Self = Self { mean: 0.0, scale: 1.0 };

    fn fit(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 } }
    }
}

/// Trained network with the standardisation folded into prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
    pub input: Standardization,
    pub target: Standardization,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainedMlp {
    pub fn final_mse(&self) -> f64 {
        self.log[self.best_epoch - 1].mse
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_update(params: &mut MlpParams, grad: &MlpParams, cfg: &TrainConfig, adam: &mut Adam) {
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad.iter()) {
                *p -= cfg.learning_rate * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.t += 1;
            let c1 = 1.0 - beta1.powi(adam.t);
            let c2 = 1.0 - beta2.powi(adam.t);
            for (((p, g), m), v) in params.iter_mut().zip(grad.iter()).zip(adam.m.iter_mut()).zip(adam.v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Train on one-dimensional regression data.
///
/// Every epoch visits the sample in a shuffled order drawn from the stream
/// `(seed, epoch)`. The parameters with the lowest full-sample MSE are kept;
/// training stops early after `patience` epochs without improvement.
pub fn train(spec: &MlpSpec, cfg: &TrainConfig, data: &RegressionData) -> Result<TrainedMlp> {
    spec.validate()?;
    cfg.validate()?;
    if spec.d_in() != 1 {
        return Err(Error::invalid("nn.widths", "regression data has a single regressor; d_in must be 1"));
    }
    let input = if cfg.standardize_inputs { Standardization::fit(&data.x) } else { Standardization::IDENTITY };
    let target = if cfg.standardize_targets { Standardization::fit(&data.y) } else { Standardization::IDENTITY };
    let xs: Vec<f64> = data.x.iter().map(|v| (v - input.mean) / input.scale).collect();
    let ys: Vec<f64> = data.y.iter().map(|v| (v - target.mean) / target.scale).collect();
    let n = xs.len();

    let mut params = init_params(spec)?;
    let mut adam = Adam { m: vec![0.0; params.n_params()], v: vec![0.0; params.n_params()], t: 0 };
    let mut order: Vec<usize> = (0..n).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut by = Vec::with_capacity(cfg.batch_size);
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let unit = target.scale * target.scale;

    for epoch in 1..=cfg.epochs {
        let mut rng = rng::stream(spec.seed, Domain::NetShuffle, &[epoch as u64]);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(batch.iter().map(|&i| xs[i]));
            by.extend(batch.iter().map(|&i| ys[i]));
            let (_, grad) = loss_and_gradients(&params, &bx, &by)?;
            apply_update(&mut params, &grad, cfg, &mut adam);
        }
        let pred = forward(&params, &xs)?;
        let mse = pred.iter().zip(&ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n as f64 * unit;
        if !mse.is_finite() || !params.is_finite() {
            let last = log.last().map(|r: &EpochRecord| r.epoch);
            return Err(Error::Diverged { last_finite_epoch: last });
        }
        log.push(EpochRecord { epoch, mse });
        if mse < best.0 {
            best = (mse, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }

    Ok(TrainedMlp { spec: spec.clone(), params: best.2, input, target, log, best_epoch: best.1 })
}

/// Predictions in target units for one-dimensional queries.
pub fn predict_nn(model: &TrainedMlp, x_query: &[f64]) -> Result<Vec<f64>> {
    if model.params.d_in() != 1 {
        return Err(Error::invalid("x", "model expects multi-dimensional inputs"));
    }
    let z: Vec<f64> = x_query.iter().map(|v| (v - model.input.mean) / model.input.scale).collect();
    Ok(forward(&model.params, &z)?.into_iter().map(|v| v * model.target.scale + model.target.mean).collect())
}

pub const PARAMS_FORMAT: &str = "fwdim-mlp";
pub const PARAMS_VERSION: u32 = 1;

/// Versioned on-disk form of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDocument {
    pub format: String,
    pub version: u32,
    pub widths: Vec<usize>,
    pub seed: u64,
    pub layers: Vec<Layer>,
    pub input: Standardization,
    pub target: Standardization,
    pub best_epoch: usize,
}

impl From<&TrainedMlp> for MlpDocument {
    fn from(m: &TrainedMlp) -> Self {
        Self {
            format: PARAMS_FORMAT.to_string(),
            version: PARAMS_VERSION,
            widths: m.spec.widths.clone(),
            seed: m.spec.seed,
            layers: m.params.layers.clone(),
            input: m.input,
            target: m.target,
            best_epoch: m.best_epoch,
        }
    }
}

impl MlpDocument {
    /// Rebuild a predictor; the training log is not part of the document.
    pub fn into_model(self) -> Result<TrainedMlp> {
        if self.format != PARAMS_FORMAT || self.version != PARAMS_VERSION {
            return Err(Error::invalid("format", format!("unsupported document {} v{}", self.format, self.version)));
        }
        let spec = MlpSpec::new(self.widths, self.seed)?;
        let shapes_ok = self.layers.len() == spec.widths.len() - 1
            && self.layers.iter().zip(spec.widths.windows(2)).all(|(l, w)| {
                l.n_in == w[0] && l.n_out == w[1] && l.weights.len() == w[0] * w[1] && l.bias.len() == w[1]
            });
        if !shapes_ok {
            return Err(Error::invalid("layers", "layer shapes do not match widths"));
        }
        Ok(TrainedMlp {
            spec,
            params: MlpParams { layers: self.layers },
            input: self.input,
            target: self.target,
            log: Vec::new(),
            best_epoch: self.best_epoch,
        })
    }
}
