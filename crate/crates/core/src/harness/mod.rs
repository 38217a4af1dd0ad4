//! Dataset construction, experiment orchestration, metrics and export.

mod data;
mod experiment;
mod export;
mod pipeline;

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Estimator, DEFAULT_FALSE_ALARM_RATE};
use crate::fdia::{StealthBasis, DEFAULT_PIVOT_TOL};
use crate::fixtures;
use crate::grid::{build_h, load_case, measure, sample_states, GridCase, MeasurementMatrix, MeasurementVector};
use crate::neural::{mlp_specs, LayerSpec, TrainConfig};
use crate::rng::derive_seed;

pub use data::{
    build_test_sets, build_train_set, read_dataset_bin, read_dataset_csv, split, write_dataset_bin, write_dataset_csv,
    Dataset, GenerationInfo, MeasurementSample, TestSet,
};
pub use experiment::{
    run_attack_experiment, run_vanilla_sweep, spearman, AttackTarget, MetricsReport, ReportRow, SampleOutcome,
    VanillaRow, VanillaTable,
};
pub use export::{export_report, export_vanilla, export_vectors, ReportFormat, CSV_HEADER, REPORT_SCHEMA};
pub use pipeline::{provenance, AdversarialPairs, Workbench, ADV_DETECT_HOLDOUT};

/// Everything an experiment needs to know, serialized as the `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub profile: String,
    /// Bundled fixture name (`toy3`, `case14`, `case118`) or a case file path.
    pub case: String,
    pub master_seed: u64,
    /// Half-width of the uniform angle perturbation around the case angles (rad).
    pub state_spread: f64,
    /// System base; measurements are branch flows in MW (`base_mva · H x`).
    pub base_mva: f64,
    /// Measurement noise standard deviation (MW).
    pub noise_sigma: f64,
    /// Clean vectors used to calibrate `tau` and the mean legitimate L1 norm.
    pub calibration_count: usize,
    pub false_alarm_rate: f64,
    /// Overrides the calibrated threshold when set.
    pub tau: Option<f64>,
    /// Diagonal of `W`; identity when absent.
    pub weights: Option<Vec<f64>>,
    pub train_rows: usize,
    pub pollution_fraction: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub test_fraction: f64,
    pub test_k: Vec<usize>,
    pub test_per_set: usize,
    pub pivot_tol: f64,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train: TrainConfig,
    pub attack_sizes: Vec<f64>,
    pub max_iters: usize,
    /// Padding widths `P − m` evaluated by the padding experiments.
    pub pad_widths: Vec<usize>,
    pub temperatures: Vec<f64>,
    pub adv_train_max_iters: usize,
    pub adv_train_epochs: usize,
    pub vanilla_alphas: Vec<f64>,
    /// Samples per test set used by the adversarial-detection experiment.
    pub adv_detect_per_set: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::paper()
    }
}

impl ExperimentConfig {
    /// The 118-bus setting: 30,000 rows, half polluted, `70 < k < 100`.
    pub fn paper() -> Self {
        ExperimentConfig {
            profile: "paper".into(),
            case: "case118".into(),
            master_seed: 20_190_601,
            state_spread: 0.003,
            base_mva: 100.0,
            noise_sigma: 0.1,
            calibration_count: 5000,
            false_alarm_rate: DEFAULT_FALSE_ALARM_RATE,
            tau: None,
            weights: None,
            train_rows: 30_000,
            pollution_fraction: 0.5,
            k_min: 71,
            k_max: 99,
            test_fraction: 0.15,
            test_k: vec![75, 80, 85, 90],
            test_per_set: 1000,
            pivot_tol: DEFAULT_PIVOT_TOL,
            hidden: vec![128, 64, 16],
            dropout: 0.25,
            train: TrainConfig { learning_rate: 0.01, batch_size: 64, epochs: 20, rng_seed: 0, dropout_enabled: true },
            attack_sizes: vec![0.1],
            max_iters: 1000,
            pad_widths: vec![1, 10, 20],
            temperatures: vec![1.0, 5.0, 10.0, 50.0],
            adv_train_max_iters: crate::defense::ADV_TRAINING_MAX_ITERS,
            adv_train_epochs: 5,
            vanilla_alphas: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            adv_detect_per_set: 250,
        }
    }

    /// The 14-bus setting used for quick runs: 3,000 rows, `m − n < k < m`.
    pub fn desk() -> Self {
        ExperimentConfig {
            profile: "desk".into(),
            case: "case14".into(),
            master_seed: 14,
            calibration_count: 2000,
            train_rows: 3000,
            k_min: 8,
            k_max: 19,
            test_k: vec![10, 12, 14, 16],
            test_per_set: 200,
            train: TrainConfig { learning_rate: 0.01, batch_size: 32, epochs: 30, rng_seed: 0, dropout_enabled: true },
            pad_widths: vec![1, 4, 8],
            adv_train_epochs: 10,
            adv_detect_per_set: 100,
            ..ExperimentConfig::paper()
        }
    }

    pub fn by_profile(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::InvalidArgument(format!("unknown profile {other:?} (expected paper or desk)"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Seed of a named sub-experiment.
    pub fn seed(&self, label: &str, index: u64) -> u64 {
        derive_seed(self.master_seed, label, index)
    }

    /// Training settings whose shuffle/dropout/init streams derive from `label`.
    pub fn train_config(&self, label: &str) -> TrainConfig {
        TrainConfig { rng_seed: self.seed(label, 0), ..self.train }
    }

    pub fn specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        mlp_specs(input_dim, &self.hidden, self.dropout, 2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..=1.0).contains(&self.pollution_fraction) {
            return bad(format!("pollution fraction {} outside [0, 1]", self.pollution_fraction));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test fraction {} outside (0, 1)", self.test_fraction));
        }
        if self.k_min > self.k_max {
            return bad(format!("k range [{}, {}] is empty", self.k_min, self.k_max));
        }
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return bad(format!("base MVA must be > 0, got {}", self.base_mva));
        }
        if !(self.state_spread >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("state spread and noise sigma must be >= 0".into());
        }
        if self.calibration_count < 2 {
            return bad("calibration needs at least two clean vectors".into());
        }
        if self.attack_sizes.iter().any(|s| !(*s > 0.0)) {
            return bad("attack sizes must be > 0".into());
        }
        Ok(())
    }
}

/// A loaded case with its measurement model, stealth basis and calibrated
/// residual detector.
#[derive(Debug, Clone)]
pub struct CaseContext {
    pub case: GridCase,
    /// Measurement matrix scaled to MW per radian.
    pub h: MeasurementMatrix,
    pub basis: Arc<StealthBasis>,
    pub estimator: Estimator,
    /// Mean `‖z‖₁` of clean measurements; scales the injection magnitude.
    pub mean_l1: f64,
    pub pivot_tol: f64,
}

impl CaseContext {
    pub fn new(case: GridCase, cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut h = build_h(&case);
        h.h *= cfg.base_mva;
        let basis = Arc::new(StealthBasis::new(&h)?);
        let mut estimator = match &cfg.weights {
            Some(w) => {
                if w.len() != h.m() {
                    return Err(Error::Dimension { expected: h.m(), actual: w.len(), context: "weight vector" });
                }
                Estimator::with_weights(&h, DVector::from_column_slice(w))?
            }
            None => Estimator::new(&h)?,
        };
        let states = sample_states(&case, cfg.calibration_count, cfg.state_spread, cfg.seed("calibration-states", 0))?;
        let clean = states
            .iter()
            .enumerate()
            .map(|(i, x)| measure(&h, x, cfg.noise_sigma, cfg.seed("calibration-noise", i as u64)))
            .collect::<Result<Vec<MeasurementVector>>>()?;
        match cfg.tau {
            Some(t) => estimator.set_tau(t)?,
            None => {
                estimator.calibrate_tau(&clean, cfg.false_alarm_rate)?;
            }
        }
        let mean_l1 = clean.iter().map(|z| z.0.lp_norm(1)).sum::<f64>() / clean.len() as f64;
        Ok(CaseContext { case, h, basis, estimator, mean_l1, pivot_tol: cfg.pivot_tol })
    }

    /// Resolves `cfg.case` as a fixture name first, then as a path.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let case = match fixtures::by_name(&cfg.case) {
            Some(c) => c,
            None => load_case(Path::new(&cfg.case))?,
        };
        Self::new(case, cfg)
    }

    pub fn m(&self) -> usize {
        self.h.m()
    }

    pub fn tau(&self) -> f64 {
        self.estimator.tau().expect("context estimator is calibrated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_round_trip_through_json() {
        for cfg in [ExperimentConfig::paper(), ExperimentConfig::desk()] {
            let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
        let partial: ExperimentConfig = serde_json::from_str(r#"{"profile":"x","train_rows":10}"#).unwrap();
        assert_eq!(partial.train_rows, 10);
        assert_eq!(partial.k_min, 71);
        assert!(ExperimentConfig::by_profile("nope").is_err());
    }

    #[test]
    fn context_calibrates_tau_and_mean_l1() {
        let cfg = ExperimentConfig { calibration_count: 500, ..ExperimentConfig::desk() };
        let ctx = CaseContext::from_config(&cfg).unwrap();
        assert_eq!(ctx.m(), 20);
        assert!(ctx.tau() > 0.0);
        assert!(ctx.mean_l1 > 0.0);
        let fixed = CaseContext::from_config(&ExperimentConfig { tau: Some(0.5), ..cfg.clone() }).unwrap();
        assert_eq!(fixed.tau(), 0.5);
        let bad = ExperimentConfig { weights: Some(vec![1.0; 3]), ..cfg };
        assert!(CaseContext::from_config(&bad).is_err());
    }
}
