//! Feed-forward classifier with backpropagation, mini-batch SGD, inverted
//! dropout and a temperature softmax output.
//!
//! Activations are kept column-major as `features × batch` so that every
//! dense layer is a single matrix product.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const NORMAL: usize = 0;
pub const FALSE: usize = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// One dense layer. `dropout_rate` is applied to the layer's input in train mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }
}

/// The detector architecture: dense 128, 64 and 16 ReLU units, 0.25 dropout,
/// then a 2-way softmax.
pub fn detector_specs(input_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, 128, Activation::Relu),
        LayerSpec::new(128, 64, Activation::Relu),
        LayerSpec::new(64, 16, Activation::Relu),
        LayerSpec::new(16, 2, Activation::Identity).with_dropout(0.25),
    ]
}

/// Same shape as [`detector_specs`] with configurable hidden widths.
pub fn mlp_specs(input_dim: usize, hidden: &[usize], dropout: f64, classes: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &w in hidden {
        specs.push(LayerSpec::new(prev, w, Activation::Relu));
        prev = w;
    }
    specs.push(LayerSpec::new(prev, classes, Activation::Identity).with_dropout(dropout));
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub spec: LayerSpec,
    /// `output_dim × input_dim`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Per-feature affine normalization `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and standard deviation per feature; constant features get scale 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for row in rows {
            if count == 0 {
                sum = vec![0.0; row.len()];
                sq = vec![0.0; row.len()];
            } else if row.len() != sum.len() {
                return Err(Error::Dimension {
                    expected: sum.len(),
                    actual: row.len(),
                    context: "standardizer row length",
                });
            }
            for (i, v) in row.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyData("standardizer needs at least one row"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 1e-24 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Chain rule back to raw inputs: `∂L/∂x = ∂L/∂x′ / scale`.
    pub fn backward(&self, grad: &mut DVector<f64>) {
        for (g, s) in grad.iter_mut().zip(&self.scale) {
            *g /= s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Output of a single forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub probabilities: Vec<f64>,
    pub logits: Vec<f64>,
    /// Input to each layer (after dropout) followed by the final logits.
    pub activations: Vec<DVector<f64>>,
}

/// Gradients of the loss with respect to every layer's weights and bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    /// Softmax divisor.
    pub temperature: f64,
    /// Optional input normalization applied before the first layer.
    pub scaler: Option<Standardizer>,
}

fn check_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("model needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::InvalidArgument(format!("layer {i} has a zero dimension")));
        }
        if !(0.0..1.0).contains(&s.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "layer {i} dropout {} outside [0, 1)",
                s.dropout_rate
            )));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Dimension {
                expected: pair[0].output_dim,
                actual: pair[1].input_dim,
                context: if i == 0 { "layer 1 input" } else { "layer input" },
            });
        }
    }
    Ok(())
}

/// Numerically stable softmax of `logits / temperature` and its log.
fn softmax(logits: &[f64], temperature: f64) -> (Vec<f64>, Vec<f64>) {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scaled.iter().map(|s| (s - max).exp()).sum();
    let log_sum = sum.ln();
    let log_p: Vec<f64> = scaled.iter().map(|s| s - max - log_sum).collect();
    (log_p.iter().map(|l| l.exp()).collect(), log_p)
}

/// `p − t`; when `t` is one-hot the hot entry is `−Σ_{j≠hot} p_j`, which keeps
/// precision when the softmax saturates.
fn softmax_delta(p: &[f64], target: &[f64]) -> Vec<f64> {
    match target.iter().position(|&t| t == 1.0) {
        Some(hot) => p
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                if j == hot {
                    -p.iter().enumerate().filter(|(i, _)| *i != hot).map(|(_, v)| v).sum::<f64>()
                } else {
                    pj
                }
            })
            .collect(),
        None => p.iter().zip(target).map(|(pj, tj)| pj - tj).collect(),
    }
}

fn cross_entropy(log_p: &[f64], target: &[f64]) -> f64 {
    -log_p
        .iter()
        .zip(target)
        .filter(|(_, t)| **t != 0.0)
        .map(|(l, t)| t * l)
        .sum::<f64>()
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(specs: &[LayerSpec], temperature: f64, rng_seed: u64) -> Result<Self> {
        check_specs(specs)?;
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
        }
        let mut rng = rng_from_seed(rng_seed);
        let layers = specs
            .iter()
            .map(|spec| {
                let s = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
                // Row-major fill so the draw order matches the file layout.
                let mut weights = DMatrix::zeros(spec.output_dim, spec.input_dim);
                for r in 0..spec.output_dim {
                    for c in 0..spec.input_dim {
                        weights[(r, c)] = rng.random_range(-s..s);
                    }
                }
                Dense {
                    spec: *spec,
                    weights,
                    bias: DVector::zeros(spec.output_dim),
                }
            })
            .collect();
        Ok(MlpModel {
            layers,
            temperature,
            scaler: None,
        })
    }

    pub fn with_scaler(mut self, scaler: Standardizer) -> Result<Self> {
        if scaler.dim() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: scaler.dim(),
                context: "scaler dimension",
            });
        }
        self.scaler = Some(scaler);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().expect("non-empty").spec.output_dim
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: input.len(),
                context: "model input length",
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite model input".into()));
        }
        Ok(())
    }

    fn prepare(&self, input: &[f64]) -> DVector<f64> {
        match &self.scaler {
            Some(s) => DVector::from_vec(s.apply(input)),
            None => DVector::from_column_slice(input),
        }
    }

    /// Single-sample forward pass. Dropout masks are drawn from `rng_seed` in train mode.
    pub fn forward(&self, input: &[f64], mode: Mode, rng_seed: u64) -> Result<Forward> {
        self.check_input(input)?;
        let mut rng = rng_from_seed(rng_seed);
        Ok(self.forward_prepared(self.prepare(input), mode, &mut rng, self.temperature))
    }

    fn forward_prepared(&self, mut a: DVector<f64>, mode: Mode, rng: &mut Rng, temperature: f64) -> Forward {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        for layer in &self.layers {
            let rate = layer.spec.dropout_rate;
            if mode == Mode::Train && rate > 0.0 {
                let keep = 1.0 / (1.0 - rate);
                for v in a.iter_mut() {
                    *v = if rng.random::<f64>() < rate { 0.0 } else { *v * keep };
                }
            }
            let mut z = &layer.weights * &a + &layer.bias;
            if layer.spec.activation == Activation::Relu {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(std::mem::replace(&mut a, z));
        }
        let logits: Vec<f64> = a.iter().copied().collect();
        activations.push(a);
        let (probabilities, _) = softmax(&logits, temperature);
        Forward {
            probabilities,
            logits,
            activations,
        }
    }

    /// Class probabilities in infer mode.
    pub fn predict_proba(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input, Mode::Infer, 0)?.probabilities)
    }

    pub fn predict(&self, input: &[f64]) -> Result<usize> {
        self.check_input(input)?;
        Ok(argmax(&self.logits_infer(input)))
    }

    fn logits_infer(&self, input: &[f64]) -> Vec<f64> {
        let mut a = self.prepare(input);
        for layer in &self.layers {
            let mut z = &layer.weights * &a + &layer.bias;
            if layer.spec.activation == Activation::Relu {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a.iter().copied().collect()
    }

    /// Batched infer-mode logits; columns of the result are samples.
    pub fn logits_batch(&self, inputs: &[&[f64]]) -> Result<DMatrix<f64>> {
        for x in inputs {
            self.check_input(x)?;
        }
        Ok(self.forward_batch(&self.input_matrix(inputs), None).pop().expect("logits"))
    }

    pub fn predict_batch(&self, inputs: &[&[f64]]) -> Result<Vec<usize>> {
        let logits = self.logits_batch(inputs)?;
        Ok(logits
            .column_iter()
            .map(|c| argmax(c.as_slice()))
            .collect())
    }

    fn input_matrix(&self, inputs: &[&[f64]]) -> DMatrix<f64> {
        let dim = self.input_dim();
        let mut x = DMatrix::zeros(dim, inputs.len());
        for (j, row) in inputs.iter().enumerate() {
            match &self.scaler {
                Some(s) => {
                    for i in 0..dim {
                        x[(i, j)] = (row[i] - s.mean[i]) / s.scale[i];
                    }
                }
                None => x.column_mut(j).copy_from_slice(row),
            }
        }
        x
    }

    /// Returns the input of every layer (post-dropout) and the logits last.
    fn forward_batch(&self, x: &DMatrix<f64>, mut dropout: Option<&mut Rng>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut a = x.clone();
        for layer in &self.layers {
            let rate = layer.spec.dropout_rate;
            if let Some(rng) = dropout.as_deref_mut() {
                if rate > 0.0 {
                    let keep = 1.0 / (1.0 - rate);
                    for v in a.iter_mut() {
                        *v = if rng.random::<f64>() < rate { 0.0 } else { *v * keep };
                    }
                }
            }
            let mut z = &layer.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if layer.spec.activation == Activation::Relu {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(std::mem::replace(&mut a, z));
        }
        acts.push(a);
        acts
    }

    /// Cross-entropy of the softmax at `temperature` against a probability target.
    pub fn loss(&self, input: &[f64], target: &[f64], temperature: f64) -> Result<f64> {
        self.check_input(input)?;
        let logits = self.logits_infer(input);
        let (_, log_p) = softmax(&logits, temperature);
        Ok(cross_entropy(&log_p, target))
    }

    /// Backpropagates `∂L/∂logits` through one cached forward pass and
    /// returns `∂L/∂(first layer input)`, optionally accumulating weight gradients.
    fn backward_single(&self, fwd: &Forward, dlogits: DVector<f64>, mut grads: Option<&mut Gradients>) -> DVector<f64> {
        let mut delta = dlogits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.spec.activation == Activation::Relu {
                let out = &fwd.activations[i + 1];
                for (d, o) in delta.iter_mut().zip(out.iter()) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                g.weights[i] += &delta * fwd.activations[i].transpose();
                g.biases[i] += &delta;
            }
            delta = layer.weights.tr_mul(&delta);
        }
        delta
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| DMatrix::zeros(l.weights.nrows(), l.weights.ncols())).collect(),
            biases: self.layers.iter().map(|l| DVector::zeros(l.bias.len())).collect(),
        }
    }

    /// Exact `∂L/∂input` of the cross-entropy at temperature 1, infer mode.
    pub fn input_gradient(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        self.input_gradient_at(input, label, 1.0)
    }

    pub fn input_gradient_at(&self, input: &[f64], label: usize, temperature: f64) -> Result<DVector<f64>> {
        self.check_input(input)?;
        if label >= self.class_count() {
            return Err(Error::InvalidLabel(label));
        }
        let mut rng = rng_from_seed(0);
        let fwd = self.forward_prepared(self.prepare(input), Mode::Infer, &mut rng, temperature);
        let target = one_hot(label, self.class_count());
        let delta = softmax_delta(&fwd.probabilities, &target);
        let dlogits = DVector::from_vec(delta) / temperature;
        let mut grad = self.backward_single(&fwd, dlogits, None);
        if let Some(s) = &self.scaler {
            s.backward(&mut grad);
        }
        Ok(grad)
    }

    /// A positive multiple of [`MlpModel::input_gradient`]. The output delta
    /// is rescaled by the largest non-target probability, computed in log
    /// space, so the direction survives a saturated softmax whose gradient
    /// underflows to zero.
    pub fn ascent_direction(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        self.check_input(input)?;
        if label >= self.class_count() {
            return Err(Error::InvalidLabel(label));
        }
        let mut rng = rng_from_seed(0);
        let fwd = self.forward_prepared(self.prepare(input), Mode::Infer, &mut rng, 1.0);
        let (_, log_p) = softmax(fwd.logits.as_slice(), 1.0);
        let top = log_p
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != label)
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut delta = DVector::zeros(log_p.len());
        if top.is_finite() {
            for (j, l) in log_p.iter().enumerate() {
                if j != label {
                    delta[j] = (l - top).exp();
                }
            }
            delta[label] = -delta.sum();
        }
        let mut grad = self.backward_single(&fwd, delta, None);
        if let Some(s) = &self.scaler {
            s.backward(&mut grad);
        }
        Ok(grad)
    }

    /// Weight and bias gradients of the single-sample loss, infer mode.
    pub fn parameter_gradients(&self, input: &[f64], target: &[f64], temperature: f64) -> Result<Gradients> {
        self.check_input(input)?;
        let mut rng = rng_from_seed(0);
        let fwd = self.forward_prepared(self.prepare(input), Mode::Infer, &mut rng, temperature);
        let delta = softmax_delta(&fwd.probabilities, target);
        let mut grads = self.zero_gradients();
        self.backward_single(&fwd, DVector::from_vec(delta) / temperature, Some(&mut grads));
        Ok(grads)
    }

    /// One SGD step on a batch whose columns are (already normalized)
    /// inputs and probability targets. Returns the summed loss and the
    /// number of argmax hits.
    fn sgd_step(&mut self, x: &DMatrix<f64>, targets: &DMatrix<f64>, lr: f64, dropout: Option<&mut Rng>) -> (f64, usize) {
        let batch = x.ncols();
        let temperature = self.temperature;
        let acts = self.forward_batch(x, dropout);
        let logits = acts.last().expect("logits");
        let mut delta = DMatrix::zeros(logits.nrows(), batch);
        let mut loss = 0.0;
        let mut hits = 0;
        for j in 0..batch {
            let (p, log_p) = softmax(logits.column(j).as_slice(), temperature);
            let t = targets.column(j);
            loss += cross_entropy(&log_p, t.as_slice());
            if argmax(&p) == argmax(t.as_slice()) {
                hits += 1;
            }
            let d = softmax_delta(&p, t.as_slice());
            for (i, v) in d.into_iter().enumerate() {
                delta[(i, j)] = v / (temperature * batch as f64);
            }
        }
        for i in (0..self.layers.len()).rev() {
            if self.layers[i].spec.activation == Activation::Relu {
                for (d, o) in delta.iter_mut().zip(acts[i + 1].iter()) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let grad_w = &delta * acts[i].transpose();
            let grad_b = delta.column_sum();
            let next = if i > 0 { Some(self.layers[i].weights.tr_mul(&delta)) } else { None };
            let layer = &mut self.layers[i];
            layer.weights -= grad_w * lr;
            layer.bias -= grad_b * lr;
            if let Some(n) = next {
                delta = n;
            }
        }
        (loss, hits)
    }
}

/// A labeled training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    pub dropout_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 100,
            rng_seed: 0,
            dropout_enabled: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A mini-batch handed to an [`Augmenter`] before the gradient step.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    /// Probability targets, one per input.
    pub targets: Vec<Vec<f64>>,
    /// Dataset index of each input; `None` for appended samples.
    pub sources: Vec<Option<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: Vec<f64>, target: Vec<f64>, source: Option<usize>) {
        self.inputs.push(input);
        self.targets.push(target);
        self.sources.push(source);
    }
}

/// Per-batch training hook. It may rewrite inputs (e.g. padding) or append samples.
pub trait Augmenter {
    fn augment(&mut self, model: &MlpModel, batch: &mut Batch, epoch: usize) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

/// Mini-batch SGD on categorical cross-entropy with hard labels.
pub fn train(model: &mut MlpModel, data: &[Sample], cfg: &TrainConfig, augmenter: Option<&mut dyn Augmenter>) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    let classes = model.class_count();
    if let Some(bad) = data.iter().find(|s| s.label >= classes.min(2)) {
        return Err(Error::InvalidLabel(bad.label));
    }
    let inputs: Vec<&[f64]> = data.iter().map(|s| s.input.as_slice()).collect();
    let targets: Vec<Vec<f64>> = data.iter().map(|s| one_hot(s.label, classes)).collect();
    fit(model, &inputs, &targets, cfg, augmenter)
}

/// Mini-batch SGD against probability targets (soft labels).
pub fn fit(
    model: &mut MlpModel,
    inputs: &[&[f64]],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
    mut augmenter: Option<&mut dyn Augmenter>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Dimension {
            expected: inputs.len(),
            actual: targets.len(),
            context: "target count",
        });
    }
    let classes = model.class_count();
    for t in targets {
        if t.len() != classes {
            return Err(Error::Dimension {
                expected: classes,
                actual: t.len(),
                context: "target length",
            });
        }
    }
    let mut rng = rng_from_seed(cfg.rng_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Batch::default();
            for &i in chunk {
                batch.push(inputs[i].to_vec(), targets[i].clone(), Some(i));
            }
            if let Some(aug) = augmenter.as_deref_mut() {
                aug.augment(model, &mut batch, epoch)?;
            }
            let refs: Vec<&[f64]> = batch.inputs.iter().map(|v| v.as_slice()).collect();
            for x in &refs {
                model.check_input(x)?;
            }
            let x = model.input_matrix(&refs);
            let t = DMatrix::from_fn(classes, batch.len(), |r, c| batch.targets[c][r]);
            let dropout = if cfg.dropout_enabled { Some(&mut rng) } else { None };
            let (l, h) = model.sgd_step(&x, &t, cfg.learning_rate, dropout);
            loss_sum += l;
            hits += h;
            seen += batch.len();
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / seen as f64,
            accuracy: hits as f64 / seen as f64,
        };
        log::debug!("epoch {epoch}: loss {:.5} acc {:.4}", stats.loss, stats.accuracy);
        log.epochs.push(stats);
    }
    Ok(log)
}

/// Fits a [`Standardizer`] on the training inputs, initializes a fresh
/// network from a seed derived from `cfg.rng_seed` and trains it.
pub fn train_detector(data: &[Sample], specs: &[LayerSpec], temperature: f64, cfg: &TrainConfig) -> Result<(MlpModel, TrainLog)> {
    if data.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    let scaler = Standardizer::fit(data.iter().map(|s| s.input.as_slice()))?;
    let mut model = MlpModel::new(specs, temperature, init_seed(cfg))?.with_scaler(scaler)?;
    let log = train(&mut model, data, cfg, None)?;
    Ok((model, log))
}

/// Weight-initialization seed used by the trainers built on [`TrainConfig`].
pub fn init_seed(cfg: &TrainConfig) -> u64 {
    derive_seed(cfg.rng_seed, "init", 0)
}

/// Confusion counts with `False` (label 1) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    /// `confusion[actual][predicted]`.
    pub confusion: [[usize; 2]; 2],
}

impl Evaluation {
    pub fn from_predictions(labels: &[usize], predicted: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyData("evaluation set"));
        }
        let mut confusion = [[0usize; 2]; 2];
        for (&y, &p) in labels.iter().zip(predicted) {
            if y > 1 {
                return Err(Error::InvalidLabel(y));
            }
            confusion[y][p.min(1)] += 1;
        }
        let total = labels.len() as f64;
        let tp = confusion[1][1] as f64;
        let fn_ = confusion[1][0] as f64;
        let fp = confusion[0][1] as f64;
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        Ok(Evaluation {
            accuracy: (confusion[0][0] + confusion[1][1]) as f64 / total,
            recall: ratio(tp, tp + fn_),
            precision: ratio(tp, tp + fp),
            confusion,
        })
    }
}

pub fn evaluate(model: &MlpModel, data: &[Sample]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyData("evaluation set"));
    }
    let mut predicted = Vec::with_capacity(data.len());
    for chunk in data.chunks(512) {
        let refs: Vec<&[f64]> = chunk.iter().map(|s| s.input.as_slice()).collect();
        predicted.extend(model.predict_batch(&refs)?);
    }
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    Evaluation::from_predictions(&labels, &predicted)
}

/// Anything an attacker can query for predictions and loss gradients.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn predict(&self, input: &[f64]) -> Result<usize>;
    /// `∂L(F(input), label)/∂input`.
    fn loss_gradient(&self, input: &[f64], label: usize) -> Result<DVector<f64>>;
    /// Any positive multiple of [`Classifier::loss_gradient`]; attacks that
    /// normalize their steps only need the direction.
    fn ascent_direction(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        self.loss_gradient(input, label)
    }
}

impl Classifier for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn predict(&self, input: &[f64]) -> Result<usize> {
        MlpModel::predict(self, input)
    }

    fn loss_gradient(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        self.input_gradient(input, label)
    }

    fn ascent_direction(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        MlpModel::ascent_direction(self, input, label)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    #[serde(rename = "in")]
    input_dim: usize,
    #[serde(rename = "out")]
    output_dim: usize,
    activation: Activation,
    dropout: f64,
    /// Row-major `out × in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ModelRecord {
    version: u32,
    temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<Standardizer>,
    layers: Vec<LayerRecord>,
}

impl From<&MlpModel> for ModelRecord {
    fn from(model: &MlpModel) -> Self {
        ModelRecord {
            version: MODEL_FORMAT_VERSION,
            temperature: model.temperature,
            scaler: model.scaler.clone(),
            layers: model
                .layers
                .iter()
                .map(|l| LayerRecord {
                    input_dim: l.spec.input_dim,
                    output_dim: l.spec.output_dim,
                    activation: l.spec.activation,
                    dropout: l.spec.dropout_rate,
                    weights: l.weights.transpose().as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelRecord> for MlpModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let specs: Vec<LayerSpec> = r
            .layers
            .iter()
            .map(|l| LayerSpec {
                input_dim: l.input_dim,
                output_dim: l.output_dim,
                activation: l.activation,
                dropout_rate: l.dropout,
            })
            .collect();
        check_specs(&specs).map_err(|e| Error::Corrupt(e.to_string()))?;
        if !(r.temperature > 0.0) {
            return Err(Error::Corrupt(format!("temperature {}", r.temperature)));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (spec, l) in specs.into_iter().zip(r.layers) {
            if l.weights.len() != spec.input_dim * spec.output_dim || l.bias.len() != spec.output_dim {
                return Err(Error::Corrupt("layer parameter count does not match its shape".into()));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Corrupt("non-finite parameter".into()));
            }
            layers.push(Dense {
                spec,
                weights: DMatrix::from_row_slice(spec.output_dim, spec.input_dim, &l.weights),
                bias: DVector::from_vec(l.bias),
            });
        }
        let model = MlpModel {
            layers,
            temperature: r.temperature,
            scaler: None,
        };
        match r.scaler {
            Some(s) => model.with_scaler(s).map_err(|e| Error::Corrupt(e.to_string())),
            None => Ok(model),
        }
    }
}

pub(crate) fn check_version(value: &serde_json::Value) -> Result<()> {
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupt("missing format version".into()))?;
    if version > u64::from(MODEL_FORMAT_VERSION) {
        return Err(Error::Version {
            found: version.min(u64::from(u32::MAX)) as u32,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Serializes to the versioned JSON model container.
pub fn save_model(model: &MlpModel) -> Vec<u8> {
    serde_json::to_vec(&ModelRecord::from(model)).expect("model serializes")
}

pub fn load_model(bytes: &[u8]) -> Result<MlpModel> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Corrupt(e.to_string()))?;
    check_version(&value)?;
    let record: ModelRecord = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    MlpModel::try_from(record)
}
