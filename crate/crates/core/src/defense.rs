//! Defenses against the constrained attack: random input padding, defensive
//! distillation, adversarial training and an auxiliary adversarial detector.

use std::time::Instant;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attack::{craft_perturbation, AttackConfig};
use crate::error::{Error, Result};
use crate::fdia::{ConstraintSystem, STEALTH_TOL};
use crate::grid::MeasurementVector;
use crate::neural::{
    check_version, evaluate, fit, init_seed, one_hot, train, Augmenter, Batch, Classifier, Evaluation, LayerSpec,
    MlpModel, ModelRecord, Sample, Standardizer, TrainConfig, TrainLog, FALSE, MODEL_FORMAT_VERSION,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Iteration cap of the attack run inside the adversarial-training loop.
pub const ADV_TRAINING_MAX_ITERS: usize = 50;

/// `[0; offset] ++ z ++ [0; pad_width - offset]`.
pub fn pad_input(z: &[f64], pad_width: usize, offset: usize) -> Result<Vec<f64>> {
    if offset > pad_width {
        return Err(Error::InvalidArgument(format!(
            "padding offset {offset} outside [0, {pad_width}]"
        )));
    }
    let mut out = vec![0.0; z.len() + pad_width];
    out[offset..offset + z.len()].copy_from_slice(z);
    Ok(out)
}

/// A detector whose input is the measurement embedded at a random offset in a
/// zero vector of width `m + pad_width`.
#[derive(Debug, Clone)]
pub struct PaddedModel {
    /// Network over the padded width; it carries no scaler of its own.
    pub inner: MlpModel,
    /// Measurement-space standardization applied before padding.
    pub scaler: Option<Standardizer>,
    m: usize,
    pad_width: usize,
    seed: u64,
    rng: Rng,
}

impl PartialEq for PaddedModel {
    fn eq(&self, other: &Self) -> bool {
        self.inner == other.inner
            && self.scaler == other.scaler
            && self.m == other.m
            && self.pad_width == other.pad_width
            && self.seed == other.seed
    }
}

impl PaddedModel {
    pub fn new(inner: MlpModel, scaler: Option<Standardizer>, m: usize, pad_width: usize, seed: u64) -> Result<Self> {
        if inner.scaler.is_some() {
            return Err(Error::InvalidArgument("inner padded network must not carry a scaler".into()));
        }
        if inner.input_dim() != m + pad_width {
            return Err(Error::Dimension {
                expected: m + pad_width,
                actual: inner.input_dim(),
                context: "padded network input width",
            });
        }
        if let Some(s) = &scaler {
            if s.dim() != m {
                return Err(Error::Dimension { expected: m, actual: s.dim(), context: "scaler dimension" });
            }
        }
        Ok(PaddedModel { inner, scaler, m, pad_width, seed, rng: rng_from_seed(seed) })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn pad_width(&self) -> usize {
        self.pad_width
    }

    /// `P − m + 1`.
    pub fn offset_count(&self) -> usize {
        self.pad_width + 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Restarts the inference offset stream from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = rng_from_seed(seed);
    }

    pub fn draw_offset(&mut self) -> usize {
        self.rng.random_range(0..=self.pad_width)
    }

    /// Standardizes and pads `z` at `offset`.
    pub fn prepare(&self, z: &[f64], offset: usize) -> Result<Vec<f64>> {
        if z.len() != self.m {
            return Err(Error::Dimension { expected: self.m, actual: z.len(), context: "padded model input" });
        }
        match &self.scaler {
            Some(s) => pad_input(&s.apply(z), self.pad_width, offset),
            None => pad_input(z, self.pad_width, offset),
        }
    }

    pub fn predict_at(&self, z: &[f64], offset: usize) -> Result<usize> {
        self.inner.predict(&self.prepare(z, offset)?)
    }

    pub fn predict_proba_at(&self, z: &[f64], offset: usize) -> Result<Vec<f64>> {
        self.inner.predict_proba(&self.prepare(z, offset)?)
    }

    /// Classifies `z` at a freshly drawn offset and returns `(class, offset)`.
    pub fn infer_padded(&mut self, z: &MeasurementVector) -> Result<(usize, usize)> {
        let offset = self.draw_offset();
        Ok((self.predict_at(z.as_slice(), offset)?, offset))
    }

    /// The deterministic network seen by an attacker who fixes the offset.
    pub fn view(&self, offset: usize) -> Result<PaddedView<'_>> {
        if offset > self.pad_width {
            return Err(Error::InvalidArgument(format!(
                "padding offset {offset} outside [0, {}]",
                self.pad_width
            )));
        }
        Ok(PaddedView { model: self, offset })
    }

    /// Clean evaluation with one random offset per sample.
    pub fn evaluate(&mut self, data: &[Sample]) -> Result<Evaluation> {
        if data.is_empty() {
            return Err(Error::EmptyData("evaluation set"));
        }
        let mut padded = Vec::with_capacity(data.len());
        for s in data {
            let offset = self.draw_offset();
            padded.push(Sample { input: self.prepare(&s.input, offset)?, label: s.label });
        }
        evaluate(&self.inner, &padded)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PaddedView<'a> {
    model: &'a PaddedModel,
    offset: usize,
}

impl PaddedView<'_> {
    pub fn offset(&self) -> usize {
        self.offset
    }
}

impl Classifier for PaddedView<'_> {
    fn input_dim(&self) -> usize {
        self.model.m
    }

    fn predict(&self, input: &[f64]) -> Result<usize> {
        self.model.predict_at(input, self.offset)
    }

    fn loss_gradient(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        let padded = self.model.inner.input_gradient(&self.model.prepare(input, self.offset)?, label)?;
        Ok(self.unpad(padded))
    }

    fn ascent_direction(&self, input: &[f64], label: usize) -> Result<DVector<f64>> {
        let padded = self.model.inner.ascent_direction(&self.model.prepare(input, self.offset)?, label)?;
        Ok(self.unpad(padded))
    }
}

impl PaddedView<'_> {
    /// Gradient in padded, standardized space back to raw measurement space.
    fn unpad(&self, padded: DVector<f64>) -> DVector<f64> {
        let mut g = padded.rows(self.offset, self.model.m).into_owned();
        if let Some(s) = &self.model.scaler {
            s.backward(&mut g);
        }
        g
    }
}

/// Re-pads every batch input at a fresh uniform offset.
#[derive(Debug, Clone)]
pub struct PaddingAugmenter {
    scaler: Option<Standardizer>,
    pad_width: usize,
    rng: Rng,
    /// Offset histogram of each epoch.
    pub offset_counts: Vec<Vec<usize>>,
}

impl PaddingAugmenter {
    pub fn new(scaler: Option<Standardizer>, pad_width: usize, seed: u64) -> Self {
        PaddingAugmenter { scaler, pad_width, rng: rng_from_seed(seed), offset_counts: Vec::new() }
    }
}

impl Augmenter for PaddingAugmenter {
    fn augment(&mut self, _model: &MlpModel, batch: &mut Batch, epoch: usize) -> Result<()> {
        while self.offset_counts.len() <= epoch {
            self.offset_counts.push(vec![0; self.pad_width + 1]);
        }
        for input in &mut batch.inputs {
            let offset = self.rng.random_range(0..=self.pad_width);
            self.offset_counts[epoch][offset] += 1;
            let scaled = match &self.scaler {
                Some(s) => s.apply(input),
                None => std::mem::take(input),
            };
            *input = pad_input(&scaled, self.pad_width, offset)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddedTrainLog {
    pub train: TrainLog,
    pub offset_counts: Vec<Vec<usize>>,
}

/// Trains a padded detector on measurement-space samples.
///
/// The inner network is initialized and shuffled exactly like
/// [`crate::neural::train_detector`], so `pad_width = 0` reproduces plain
/// training.
pub fn train_padded(
    data: &[Sample],
    pad_width: usize,
    specs: &[LayerSpec],
    cfg: &TrainConfig,
) -> Result<(PaddedModel, PaddedTrainLog)> {
    if data.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    let m = data[0].input.len();
    let width = specs.first().map(|s| s.input_dim).unwrap_or(0);
    if width != m + pad_width {
        return Err(Error::Dimension { expected: m + pad_width, actual: width, context: "padded network input width" });
    }
    let scaler = Standardizer::fit(data.iter().map(|s| s.input.as_slice()))?;
    let mut inner = MlpModel::new(specs, 1.0, init_seed(cfg))?;
    let mut hook = PaddingAugmenter::new(Some(scaler.clone()), pad_width, derive_seed(cfg.rng_seed, "padding", 0));
    let log = train(&mut inner, data, cfg, Some(&mut hook))?;
    let model = PaddedModel::new(inner, Some(scaler), m, pad_width, derive_seed(cfg.rng_seed, "padding-inference", 0))?;
    Ok((model, PaddedTrainLog { train: log, offset_counts: hook.offset_counts }))
}

#[derive(Serialize, Deserialize)]
struct PaddedRecord {
    version: u32,
    m: usize,
    pad_width: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<Standardizer>,
    model: ModelRecord,
}

pub fn save_padded(model: &PaddedModel) -> Vec<u8> {
    let record = PaddedRecord {
        version: MODEL_FORMAT_VERSION,
        m: model.m,
        pad_width: model.pad_width,
        seed: model.seed,
        scaler: model.scaler.clone(),
        model: ModelRecord::from(&model.inner),
    };
    serde_json::to_vec(&record).expect("padded model serializes")
}

pub fn load_padded(bytes: &[u8]) -> Result<PaddedModel> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Corrupt(e.to_string()))?;
    check_version(&value)?;
    if let Some(inner) = value.get("model") {
        check_version(inner)?;
    }
    let r: PaddedRecord = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    let inner = MlpModel::try_from(r.model)?;
    PaddedModel::new(inner, r.scaler, r.m, r.pad_width, r.seed).map_err(|e| Error::Corrupt(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillationConfig {
    pub temperature: f64,
    /// Multiply the learning rate by `T` for both networks. The softmax
    /// gradient at temperature `T` carries a `1/T` factor, and without the
    /// compensation networks trained at `T ≥ 10` stay near chance within the
    /// plain epoch budget.
    #[serde(default = "yes")]
    pub scale_learning_rate: bool,
}

fn yes() -> bool {
    true
}

impl DistillationConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
        }
        Ok(DistillationConfig { temperature, scale_learning_rate: true })
    }
}

#[derive(Debug, Clone)]
pub struct Distilled {
    pub teacher: MlpModel,
    /// The deployed network. Its `temperature` records the training
    /// temperature; predictions and attack gradients are taken at 1.
    pub student: MlpModel,
    pub teacher_log: TrainLog,
    pub student_log: TrainLog,
}

/// Defensive distillation: a teacher trained at `T` on hard labels produces
/// soft labels at `T`, and a fresh student of the same shape is trained on
/// them at `T`.
pub fn distill(data: &[Sample], specs: &[LayerSpec], cfg: &TrainConfig, dcfg: &DistillationConfig) -> Result<Distilled> {
    let t = DistillationConfig::new(dcfg.temperature)?.temperature;
    let cfg = &TrainConfig {
        learning_rate: if dcfg.scale_learning_rate { cfg.learning_rate * t } else { cfg.learning_rate },
        ..*cfg
    };
    let (teacher, teacher_log) = crate::neural::train_detector(data, specs, t, cfg)?;
    let mut soft = Vec::with_capacity(data.len());
    for s in data {
        soft.push(teacher.predict_proba(&s.input)?);
    }
    let student_cfg = TrainConfig { rng_seed: derive_seed(cfg.rng_seed, "student", 0), ..*cfg };
    let mut student = MlpModel::new(specs, t, init_seed(&student_cfg))?;
    if let Some(s) = &teacher.scaler {
        student = student.with_scaler(s.clone())?;
    }
    let inputs: Vec<&[f64]> = data.iter().map(|s| s.input.as_slice()).collect();
    let student_log = fit(&mut student, &inputs, &soft, &student_cfg, None)?;
    Ok(Distilled { teacher, student, teacher_log, student_log })
}

/// Mean `‖∂L(F(z), y)/∂z‖₂` at temperature 1 over `data`.
pub fn input_sensitivity(model: &MlpModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData("sensitivity set"));
    }
    let mut total = 0.0;
    for s in data {
        total += model.input_gradient(&s.input, s.label)?.norm();
    }
    Ok(total / data.len() as f64)
}

/// Constraint system and injected vector of one false training sample.
#[derive(Debug, Clone, Copy)]
pub struct Provenance<'a> {
    pub system: &'a ConstraintSystem,
    pub a: &'a DVector<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarialStats {
    pub attempted: usize,
    pub appended: usize,
    pub fooled: usize,
    /// Failed or degenerate attacks that were left out of the batch.
    pub skipped: usize,
}

/// Appends attacked copies of each batch's false samples, labelled False.
pub struct AdversarialAugmenter<'a> {
    provenance: &'a [Option<Provenance<'a>>],
    attack: AttackConfig,
    pub stats: AdversarialStats,
}

impl<'a> AdversarialAugmenter<'a> {
    pub fn new(provenance: &'a [Option<Provenance<'a>>], attack: AttackConfig) -> Self {
        AdversarialAugmenter { provenance, attack, stats: AdversarialStats::default() }
    }
}

impl Augmenter for AdversarialAugmenter<'_> {
    fn augment(&mut self, model: &MlpModel, batch: &mut Batch, _epoch: usize) -> Result<()> {
        let target = one_hot(FALSE, model.class_count());
        let mut extra = Vec::new();
        for (input, source) in batch.inputs.iter().zip(&batch.sources) {
            let Some(p) = source.and_then(|i| self.provenance.get(i).copied().flatten()) else {
                continue;
            };
            self.stats.attempted += 1;
            let z_a = MeasurementVector(DVector::from_column_slice(input));
            match craft_perturbation(model, p.system, &z_a, p.a, &self.attack) {
                Ok(res) if res.iterations > 0 => {
                    let scale = res.a_hat.amax().max(1.0);
                    if p.system.basis().violation(&res.a_hat) > STEALTH_TOL * scale {
                        self.stats.skipped += 1;
                        continue;
                    }
                    self.stats.fooled += usize::from(res.success);
                    extra.push(res.z_adv(&z_a).0.as_slice().to_vec());
                }
                Ok(_) => self.stats.skipped += 1,
                Err(e) => {
                    log::debug!("adversarial augmentation skipped a sample: {e}");
                    self.stats.skipped += 1;
                }
            }
        }
        self.stats.appended += extra.len();
        for x in extra {
            batch.push(x, target.clone(), None);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialTraining {
    pub model: MlpModel,
    pub log: TrainLog,
    pub stats: AdversarialStats,
    pub wall_clock_s: f64,
}

/// Trains a detector whose batches are augmented with constrained attacks
/// crafted against the current weights. `provenance[i]` must be set for the
/// false samples to be attacked; `attack = None` disables augmentation.
pub fn adversarial_training(
    data: &[Sample],
    provenance: &[Option<Provenance<'_>>],
    specs: &[LayerSpec],
    cfg: &TrainConfig,
    attack: Option<&AttackConfig>,
) -> Result<AdversarialTraining> {
    if data.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    if provenance.len() != data.len() {
        return Err(Error::Dimension { expected: data.len(), actual: provenance.len(), context: "provenance count" });
    }
    let start = Instant::now();
    let scaler = Standardizer::fit(data.iter().map(|s| s.input.as_slice()))?;
    let mut model = MlpModel::new(specs, 1.0, init_seed(cfg))?.with_scaler(scaler)?;
    let (log, stats) = match attack {
        Some(a) => {
            let mut hook = AdversarialAugmenter::new(provenance, *a);
            let log = train(&mut model, data, cfg, Some(&mut hook))?;
            (log, hook.stats)
        }
        None => (train(&mut model, data, cfg, None)?, AdversarialStats::default()),
    };
    Ok(AdversarialTraining { model, log, stats, wall_clock_s: start.elapsed().as_secs_f64() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvaluation {
    pub accuracy: f64,
    pub auc: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Area under the ROC curve of `scores` for `positives`, with ties counted half.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let n_pos = positives.iter().filter(|p| **p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::EmptyData("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tie groups (Mann-Whitney U).
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positives[k]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Auxiliary classifier separating false (label 0) from adversarial (label 1)
/// measurements, evaluated on a stratified hold-out of `holdout` fraction.
pub fn train_adversarial_detector(
    false_samples: &[Vec<f64>],
    adversarial_samples: &[Vec<f64>],
    specs: &[LayerSpec],
    cfg: &TrainConfig,
    holdout: f64,
) -> Result<(MlpModel, DetectorEvaluation)> {
    if false_samples.is_empty() || adversarial_samples.is_empty() {
        return Err(Error::EmptyData("adversarial detector needs both classes"));
    }
    if !(0.0..1.0).contains(&holdout) || holdout == 0.0 {
        return Err(Error::InvalidArgument(format!("holdout fraction {holdout} outside (0, 1)")));
    }
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, "adv-detector-split", 0));
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    for (label, rows) in [(0usize, false_samples), (1, adversarial_samples)] {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * holdout).round() as usize).clamp(1, rows.len().max(2) - 1);
        for (pos, &i) in idx.iter().enumerate() {
            let s = Sample { input: rows[i].clone(), label };
            if pos < n_test { test_set.push(s) } else { train_set.push(s) }
        }
    }
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::EmptyData("adversarial detector split"));
    }
    let (model, _) = crate::neural::train_detector(&train_set, specs, 1.0, cfg)?;
    let eval = evaluate(&model, &test_set)?;
    let mut scores = Vec::with_capacity(test_set.len());
    for s in &test_set {
        scores.push(model.predict_proba(&s.input)?[1]);
    }
    let positives: Vec<bool> = test_set.iter().map(|s| s.label == 1).collect();
    let auc = roc_auc(&scores, &positives)?;
    Ok((
        model,
        DetectorEvaluation { accuracy: eval.accuracy, auc, n_train: train_set.len(), n_test: test_set.len() },
    ))
}
