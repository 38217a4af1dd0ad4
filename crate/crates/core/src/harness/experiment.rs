use std::time::Instant;

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::data::TestSet;
use crate::attack::{craft_perturbation, AttackConfig, Termination};
use crate::defense::PaddedModel;
use crate::error::{Error, Result};
use crate::grid::MeasurementVector;
use crate::neural::{MlpModel, FALSE};
use crate::rng::{derive_seed, rng_from_seed};

/// The detector under attack.
#[derive(Debug, Clone, Copy)]
pub enum AttackTarget<'a> {
    Plain(&'a MlpModel),
    Padded(&'a PaddedModel),
}

impl AttackTarget<'_> {
    fn input_dim(&self) -> usize {
        match self {
            AttackTarget::Plain(m) => m.input_dim(),
            AttackTarget::Padded(p) => p.m(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: String,
    pub k: usize,
    pub size: f64,
    pub recall: f64,
    /// Mean `‖v‖₂` over successful attacks; absent when none succeeded.
    pub bias_l2: Option<f64>,
    /// Mean `‖a + v‖₂` over successful attacks.
    pub valid_l2: Option<f64>,
    pub n_success: usize,
    pub n_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub set: String,
    pub k: usize,
    pub size: f64,
    pub index: usize,
    pub iterations: usize,
    pub termination: Termination,
    /// Whether the final `z_a + v` was classified False by the detector.
    pub detected: bool,
    pub bias_l2: f64,
    pub valid_l2: f64,
    pub attacker_offset: Option<usize>,
    pub eval_offset: Option<usize>,
    /// Wall-clock time spent crafting the perturbation.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case: String,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub samples: Vec<SampleOutcome>,
}

impl MetricsReport {
    pub fn row(&self, k: usize, size: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.k == k && r.size == size)
    }

    pub fn mean_recall(&self) -> f64 {
        self.rows.iter().map(|r| r.recall).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn median_elapsed_s(&self) -> Option<f64> {
        let mut t: Vec<f64> = self.samples.iter().map(|s| s.elapsed_s).collect();
        if t.is_empty() {
            return None;
        }
        t.sort_by(f64::total_cmp);
        let mid = t.len() / 2;
        Some(if t.len() % 2 == 1 { t[mid] } else { 0.5 * (t[mid - 1] + t[mid]) })
    }
}

fn mean_or_none(sum: f64, count: usize) -> Option<f64> {
    (count > 0).then(|| sum / count as f64)
}

/// Crafts the constrained attack on every test row and classifies the result.
///
/// Against a padded model the attacker fixes `cfg.padding_offset` (or a
/// random offset per sample when unset) and the detector pads each
/// adversarial vector at an independent fresh offset. All draws derive from
/// `seed` and the sample position, so reports do not depend on run order.
pub fn run_attack_experiment(
    target: AttackTarget<'_>,
    test_sets: &[TestSet],
    attacks: &[AttackConfig],
    seed: u64,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let case = test_sets.first().map(|s| s.dataset.case_name.clone()).unwrap_or_default();
    for cfg in attacks {
        for (set_idx, set) in test_sets.iter().enumerate() {
            let m = set.system.scenario().m();
            if target.input_dim() != m {
                return Err(Error::Dimension { expected: m, actual: target.input_dim(), context: "model vs test set width" });
            }
            let (mut detected_count, mut n_success, mut bias_sum, mut valid_sum) = (0usize, 0usize, 0.0, 0.0);
            for (i, s) in set.dataset.samples.iter().enumerate() {
                let a = s
                    .a
                    .as_ref()
                    .map(|a| DVector::from_column_slice(a))
                    .ok_or_else(|| Error::InvalidArgument(format!("test row {i} of {} has no injection", set.dataset.name)))?;
                let z_a = MeasurementVector(DVector::from_column_slice(&s.values));
                let sample_seed = derive_seed(derive_seed(seed, "set", set_idx as u64), "sample", i as u64);
                let start = Instant::now();
                let (res, attacker_offset, eval_offset, detected) = match target {
                    AttackTarget::Plain(model) => {
                        let res = craft_perturbation(model, &set.system, &z_a, &a, cfg)?;
                        let detected = model.predict(res.z_adv(&z_a).as_slice())? == FALSE;
                        (res, None, None, detected)
                    }
                    AttackTarget::Padded(model) => {
                        let w = model.pad_width();
                        let offset = match cfg.padding_offset {
                            Some(o) => o,
                            None => rng_from_seed(derive_seed(sample_seed, "attacker-offset", 0)).random_range(0..=w),
                        };
                        let view = model.view(offset)?;
                        let res = craft_perturbation(&view, &set.system, &z_a, &a, cfg)?;
                        let eval = rng_from_seed(derive_seed(sample_seed, "eval-offset", 0)).random_range(0..=w);
                        let detected = model.predict_at(res.z_adv(&z_a).as_slice(), eval)? == FALSE;
                        (res, Some(offset), Some(eval), detected)
                    }
                };
                let elapsed_s = start.elapsed().as_secs_f64();
                let bias_l2 = res.v.norm();
                let valid_l2 = res.a_hat.norm();
                if detected {
                    detected_count += 1;
                } else {
                    n_success += 1;
                    bias_sum += bias_l2;
                    valid_sum += valid_l2;
                }
                samples.push(SampleOutcome {
                    set: set.dataset.name.clone(),
                    k: set.k(),
                    size: cfg.size,
                    index: i,
                    iterations: res.iterations,
                    termination: res.termination,
                    detected,
                    bias_l2,
                    valid_l2,
                    attacker_offset,
                    eval_offset,
                    elapsed_s,
                });
            }
            let n_total = set.dataset.len();
            rows.push(ReportRow {
                case: case.clone(),
                k: set.k(),
                size: cfg.size,
                recall: if n_total > 0 { detected_count as f64 / n_total as f64 } else { 0.0 },
                bias_l2: mean_or_none(bias_sum, n_success),
                valid_l2: mean_or_none(valid_sum, n_success),
                n_success,
                n_total,
            });
        }
    }
    Ok(MetricsReport { case, config, rows, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanillaRow {
    pub case: String,
    pub k: usize,
    pub alpha: f64,
    pub recall: f64,
    pub bias_l2: Option<f64>,
    pub valid_l2: Option<f64>,
    pub n_success: usize,
    pub n_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanillaTable {
    pub rows: Vec<VanillaRow>,
}

impl VanillaTable {
    /// `(alpha, recall)` pooled over all test sets.
    pub fn pooled(&self) -> Vec<(f64, f64)> {
        let mut alphas: Vec<f64> = self.rows.iter().map(|r| r.alpha).collect();
        alphas.dedup();
        alphas
            .into_iter()
            .map(|alpha| {
                let (hit, total) = self
                    .rows
                    .iter()
                    .filter(|r| r.alpha == alpha)
                    .fold((0usize, 0usize), |(h, t), r| (h + r.n_total - r.n_success, t + r.n_total));
                (alpha, hit as f64 / total.max(1) as f64)
            })
            .collect()
    }
}

/// Scales each test injection by `alpha` (`z + α a`) and classifies it.
/// Padded models see one random offset per sample.
pub fn run_vanilla_sweep(target: AttackTarget<'_>, test_sets: &[TestSet], alphas: &[f64], seed: u64) -> Result<VanillaTable> {
    let mut rows = Vec::new();
    for (alpha_idx, &alpha) in alphas.iter().enumerate() {
        for (set_idx, set) in test_sets.iter().enumerate() {
            let mut inputs = Vec::with_capacity(set.dataset.len());
            let mut norms = Vec::with_capacity(set.dataset.len());
            for (i, s) in set.dataset.samples.iter().enumerate() {
                let a = s
                    .a
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument(format!("test row {i} of {} has no injection", set.dataset.name)))?;
                let x: Vec<f64> = s.values.iter().zip(a).map(|(z, a)| z - a + alpha * a).collect();
                let a_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                norms.push(((alpha - 1.0).abs() * a_norm, alpha.abs() * a_norm));
                inputs.push(x);
            }
            let predicted: Vec<usize> = match target {
                AttackTarget::Plain(model) => {
                    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
                    model.predict_batch(&refs)?
                }
                AttackTarget::Padded(model) => {
                    let base = derive_seed(derive_seed(seed, "vanilla", alpha_idx as u64), "set", set_idx as u64);
                    let w = model.pad_width();
                    inputs
                        .iter()
                        .enumerate()
                        .map(|(i, x)| {
                            let o = rng_from_seed(derive_seed(base, "eval-offset", i as u64)).random_range(0..=w);
                            model.predict_at(x, o)
                        })
                        .collect::<Result<_>>()?
                }
            };
            let (mut hits, mut n_success, mut bias, mut valid) = (0usize, 0usize, 0.0, 0.0);
            for (p, (b, v)) in predicted.iter().zip(&norms) {
                if *p == FALSE {
                    hits += 1;
                } else {
                    n_success += 1;
                    bias += b;
                    valid += v;
                }
            }
            let n_total = inputs.len();
            rows.push(VanillaRow {
                case: set.dataset.case_name.clone(),
                k: set.k(),
                alpha,
                recall: hits as f64 / n_total.max(1) as f64,
                bias_l2: mean_or_none(bias, n_success),
                valid_l2: mean_or_none(valid, n_success),
                n_success,
                n_total,
            });
        }
    }
    Ok(VanillaTable { rows })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}
