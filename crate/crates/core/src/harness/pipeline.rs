//! End-to-end experiment steps shared by the command line and the tests.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::data::{build_test_sets, build_train_set, split, Dataset, TestSet};
use super::experiment::{run_attack_experiment, run_vanilla_sweep, AttackTarget, MetricsReport, VanillaTable};
use super::{CaseContext, ExperimentConfig};
use crate::attack::{craft_perturbation, AttackConfig};
use crate::defense::{
    adversarial_training, distill, train_adversarial_detector, train_padded, AdversarialTraining, DetectorEvaluation,
    DistillationConfig, Distilled, PaddedModel, PaddedTrainLog, Provenance,
};
use crate::error::{Error, Result};
use crate::fdia::ConstraintSystem;
use crate::grid::MeasurementVector;
use crate::neural::{train_detector, MlpModel, Sample, TrainLog};

/// Fraction of the false/adversarial pairs held out when scoring the
/// auxiliary adversarial detector.
pub const ADV_DETECT_HOLDOUT: f64 = 0.3;

/// Context, training split and attack test sets of one configuration.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub cfg: ExperimentConfig,
    pub ctx: CaseContext,
    pub train: Dataset,
    pub holdout: Dataset,
    pub test_sets: Vec<TestSet>,
}

impl Workbench {
    /// Generates every dataset from `cfg`.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let ctx = CaseContext::from_config(cfg)?;
        let full = build_train_set(&ctx, cfg)?;
        Self::assemble(cfg, ctx, full)
    }

    /// Uses a previously generated training dataset; the test sets are
    /// regenerated from `cfg`.
    pub fn from_dataset(cfg: &ExperimentConfig, full: Dataset) -> Result<Self> {
        let ctx = CaseContext::from_config(cfg)?;
        if full.m() != ctx.m() {
            return Err(Error::Dimension { expected: ctx.m(), actual: full.m(), context: "dataset width vs case" });
        }
        full.validate(&ctx)?;
        Self::assemble(cfg, ctx, full)
    }

    fn assemble(cfg: &ExperimentConfig, ctx: CaseContext, full: Dataset) -> Result<Self> {
        let (train, holdout) = split(&full, cfg.test_fraction, cfg.seed("split", 0))?;
        let test_sets = build_test_sets(&ctx, cfg)?;
        Ok(Workbench { cfg: cfg.clone(), ctx, train, holdout, test_sets })
    }

    pub fn m(&self) -> usize {
        self.ctx.m()
    }

    pub fn train_samples(&self) -> Vec<Sample> {
        self.train.to_samples()
    }

    pub fn holdout_samples(&self) -> Vec<Sample> {
        self.holdout.to_samples()
    }

    /// The first `per_set` rows of each test set.
    pub fn truncated_test_sets(&self, per_set: usize) -> Vec<TestSet> {
        self.test_sets
            .iter()
            .map(|t| {
                let n = per_set.min(t.dataset.len());
                let idx: Vec<usize> = (0..n).collect();
                TestSet { dataset: t.dataset.subset(&t.dataset.name, &idx), system: t.system.clone() }
            })
            .collect()
    }

    pub fn attack_configs(&self) -> Vec<AttackConfig> {
        self.cfg
            .attack_sizes
            .iter()
            .map(|&size| AttackConfig { size, max_iters: self.cfg.max_iters, padding_offset: None })
            .collect()
    }

    pub fn train_plain(&self) -> Result<(MlpModel, TrainLog)> {
        train_detector(&self.train_samples(), &self.cfg.specs(self.m()), 1.0, &self.cfg.train_config("plain"))
    }

    pub fn train_padded(&self, pad_width: usize) -> Result<(PaddedModel, PaddedTrainLog)> {
        let specs = self.cfg.specs(self.m() + pad_width);
        train_padded(&self.train_samples(), pad_width, &specs, &self.cfg.train_config("padded"))
    }

    pub fn distill(&self, temperature: f64) -> Result<Distilled> {
        let dcfg = DistillationConfig::new(temperature)?;
        distill(&self.train_samples(), &self.cfg.specs(self.m()), &self.cfg.train_config("distill"), &dcfg)
    }

    /// Adversarial training for `adv_train_epochs`; `augment = false` trains
    /// the same network without attacks, as the timing baseline.
    pub fn adversarial_training(&self, augment: bool) -> Result<AdversarialTraining> {
        let systems = self.train.constraint_systems(&self.ctx)?;
        let injections: Vec<Option<DVector<f64>>> =
            self.train.samples.iter().map(|s| s.a.as_deref().map(DVector::from_column_slice)).collect();
        let provenance = provenance(&self.train, &systems, &injections);
        let cfg = crate::neural::TrainConfig { epochs: self.cfg.adv_train_epochs, ..self.cfg.train_config("adv-train") };
        let size = self.cfg.attack_sizes.first().copied().unwrap_or(crate::attack::DEFAULT_STEP_SIZE);
        let attack = AttackConfig { size, max_iters: self.cfg.adv_train_max_iters, padding_offset: None };
        adversarial_training(
            &self.train_samples(),
            &provenance,
            &self.cfg.specs(self.m()),
            &cfg,
            augment.then_some(&attack),
        )
    }

    pub fn attack(&self, target: AttackTarget<'_>, test_sets: &[TestSet]) -> Result<MetricsReport> {
        let echo = serde_json::to_value(&self.cfg).expect("config serializes");
        run_attack_experiment(target, test_sets, &self.attack_configs(), self.cfg.seed("attack", 0), echo)
    }

    pub fn vanilla(&self, target: AttackTarget<'_>) -> Result<VanillaTable> {
        run_vanilla_sweep(target, &self.test_sets, &self.cfg.vanilla_alphas, self.cfg.seed("vanilla", 0))
    }

    /// False measurements and their attacked counterparts crafted against
    /// `model`, `adv_detect_per_set` rows per test set. Rows where the attack
    /// made no step are left out.
    pub fn adversarial_pairs(&self, model: &MlpModel) -> Result<AdversarialPairs> {
        let attack = self.attack_configs().first().copied().unwrap_or_default();
        let mut pairs = AdversarialPairs::default();
        for set in self.truncated_test_sets(self.cfg.adv_detect_per_set) {
            for s in &set.dataset.samples {
                let a = s.a.as_deref().map(DVector::from_column_slice).ok_or(Error::EmptyData("test injection"))?;
                let z_a = MeasurementVector(DVector::from_column_slice(&s.values));
                let res = craft_perturbation(model, &set.system, &z_a, &a, &attack)?;
                if res.iterations == 0 {
                    continue;
                }
                pairs.fooled += usize::from(res.success);
                pairs.adversarial.push(res.z_adv(&z_a).0.as_slice().to_vec());
                pairs.false_rows.push(s.values.clone());
            }
        }
        Ok(pairs)
    }

    pub fn adversarial_detection(&self, model: &MlpModel) -> Result<(AdversarialPairs, DetectorEvaluation)> {
        let pairs = self.adversarial_pairs(model)?;
        let (_, eval) = train_adversarial_detector(
            &pairs.false_rows,
            &pairs.adversarial,
            &self.cfg.specs(self.m()),
            &self.cfg.train_config("adv-detect"),
            ADV_DETECT_HOLDOUT,
        )?;
        Ok((pairs, eval))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversarialPairs {
    pub false_rows: Vec<Vec<f64>>,
    pub adversarial: Vec<Vec<f64>>,
    pub fooled: usize,
}

/// Per-row attack provenance of a dataset; `systems` must come from
/// [`Dataset::constraint_systems`] and `injections` align with the rows.
pub fn provenance<'a>(
    dataset: &Dataset,
    systems: &'a [ConstraintSystem],
    injections: &'a [Option<DVector<f64>>],
) -> Vec<Option<Provenance<'a>>> {
    dataset
        .samples
        .iter()
        .zip(injections)
        .map(|(s, a)| match (s.scenario_id, a) {
            (Some(id), Some(a)) => Some(Provenance { system: &systems[id], a }),
            _ => None,
        })
        .collect()
}
