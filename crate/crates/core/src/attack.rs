//! Constrained white-box attack on a neural FDIA detector.
//!
//! Starting from a detected false measurement `z_a`, the attacker repeatedly
//! takes the gradient of the False-class loss, keeps only the compromised
//! channels, projects onto the stealth solution space and adds a step whose
//! largest entry is exactly `size`. Every accumulated perturbation `v`
//! therefore satisfies `B v = 0`, and `â = a + v` stays invisible to the
//! residual test.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::defense::PaddedModel;
use crate::error::{Error, Result};
use crate::fdia::{project_to_nullspace, ConstraintSystem, FalseDataVector};
use crate::grid::MeasurementVector;
use crate::neural::{Classifier, FALSE, NORMAL};

pub const DEFAULT_STEP_SIZE: f64 = 0.1;
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Infinity norm of every update.
    pub size: f64,
    pub max_iters: usize,
    /// Offset assumed by the attacker against a padded model.
    #[serde(default)]
    pub padding_offset: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            size: DEFAULT_STEP_SIZE,
            max_iters: DEFAULT_MAX_ITERS,
            padding_offset: None,
        }
    }
}

impl AttackConfig {
    pub fn with_size(size: f64) -> Self {
        AttackConfig { size, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.size > 0.0) || !self.size.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be > 0, got {}", self.size)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The model classified `z_a + v` as Normal.
    Fooled,
    /// The iteration cap was reached first.
    IterationCap,
    /// The projected gradient vanished; there is no direction to follow.
    ZeroGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialResult {
    /// Perturbation in measurement space, zero outside the compromised set.
    pub v: DVector<f64>,
    pub success: bool,
    pub iterations: usize,
    /// Total injected vector `a + v`.
    pub a_hat: DVector<f64>,
    pub termination: Termination,
    /// `‖r‖∞` of each accepted update.
    pub step_norms: Vec<f64>,
}

impl AdversarialResult {
    pub fn z_adv(&self, z_a: &MeasurementVector) -> MeasurementVector {
        MeasurementVector(&z_a.0 + &self.v)
    }
}

/// Crafts `v` against `model` for the false measurement `z_a = z + a`.
pub fn craft_perturbation(
    model: &dyn Classifier,
    cs: &ConstraintSystem,
    z_a: &MeasurementVector,
    a: &DVector<f64>,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    cfg.validate()?;
    let m = cs.scenario().m();
    if z_a.len() != m || a.len() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: if z_a.len() != m { z_a.len() } else { a.len() },
            context: "attack input length",
        });
    }
    if model.input_dim() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: model.input_dim(),
            context: "attacked model input width",
        });
    }

    let mut v = DVector::zeros(m);
    let mut x = z_a.0.clone();
    let mut step_norms = Vec::new();
    let mut termination = Termination::IterationCap;

    for _ in 0..cfg.max_iters {
        if model.predict(x.as_slice())? != FALSE {
            termination = Termination::Fooled;
            break;
        }
        // Ascent on the False-class loss. Only the direction matters since
        // the step is renormalized. The projection zeroes U and rebuilds the
        // dependent coordinates of C.
        let grad = model.ascent_direction(x.as_slice(), FALSE)?;
        let projected = project_to_nullspace(cs, &grad);
        let peak = projected.amax();
        if !(peak > 0.0) || !peak.is_finite() {
            termination = Termination::ZeroGradient;
            break;
        }
        // Normalizing before scaling keeps ε finite when a saturated softmax
        // leaves only a subnormal gradient.
        let r = (projected / peak) * cfg.size;
        step_norms.push(r.amax());
        v += &r;
        x += &r;
    }

    let success = match termination {
        Termination::Fooled => true,
        Termination::ZeroGradient => false,
        Termination::IterationCap => model.predict(x.as_slice())? == NORMAL,
    };
    if termination == Termination::IterationCap && success {
        termination = Termination::Fooled;
    }
    Ok(AdversarialResult {
        a_hat: a + &v,
        iterations: step_norms.len(),
        v,
        success,
        termination,
        step_norms,
    })
}

/// The baseline: scale the injection by `alpha`.
pub fn vanilla_attack(a: &FalseDataVector, alpha: f64) -> FalseDataVector {
    FalseDataVector {
        a: &a.a * alpha,
        scenario: a.scenario.clone(),
    }
}

/// Attacks a padded detector through its fixed-offset view `cfg.padding_offset`.
pub fn attack_padded(
    model: &PaddedModel,
    cs: &ConstraintSystem,
    z_a: &MeasurementVector,
    a: &DVector<f64>,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    let offset = cfg
        .padding_offset
        .ok_or_else(|| Error::InvalidArgument("padded attack needs a padding offset".into()))?;
    let view = model.view(offset)?;
    craft_perturbation(&view, cs, z_a, a, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdia::{build_constraints, generate_false_data, AttackScenario, StealthBasis, DEFAULT_PIVOT_TOL};
    use crate::fixtures;
    use crate::grid::build_h;
    use std::sync::Arc;

    /// Flags a measurement as False while its first compromised channel
    /// exceeds a threshold; the loss gradient points along that channel.
    struct Threshold {
        dim: usize,
        channel: usize,
        limit: f64,
    }

    impl Classifier for Threshold {
        fn input_dim(&self) -> usize {
            self.dim
        }

        fn predict(&self, input: &[f64]) -> Result<usize> {
            Ok(usize::from(input[self.channel] > self.limit))
        }

        fn loss_gradient(&self, _input: &[f64], _label: usize) -> Result<DVector<f64>> {
            let mut g = DVector::zeros(self.dim);
            g[self.channel] = -1.0;
            Ok(g)
        }
    }

    struct Flat(usize);

    impl Classifier for Flat {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn predict(&self, _: &[f64]) -> Result<usize> {
            Ok(FALSE)
        }
        fn loss_gradient(&self, _: &[f64], _: usize) -> Result<DVector<f64>> {
            Ok(DVector::zeros(self.0))
        }
    }

    fn system() -> (Arc<StealthBasis>, ConstraintSystem) {
        let h = build_h(&fixtures::case14());
        let basis = Arc::new(StealthBasis::new(&h).unwrap());
        let scenario = AttackScenario::new((0..12).collect(), h.m(), h.n()).unwrap();
        let cs = build_constraints(&basis, &scenario, DEFAULT_PIVOT_TOL).unwrap();
        (basis, cs)
    }

    #[test]
    fn already_normal_input_returns_immediately() {
        let (_, cs) = system();
        let a = generate_false_data(&cs, 1.0, 1).unwrap();
        let clf = Threshold { dim: 20, channel: cs.independent()[0], limit: 1e9 };
        let z_a = MeasurementVector(a.a.clone());
        let res = craft_perturbation(&clf, &cs, &z_a, &a.a, &AttackConfig::default()).unwrap();
        assert!(res.success);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.v.amax(), 0.0);
    }

    #[test]
    fn steps_have_exact_size_and_stay_stealthy() {
        let (basis, cs) = system();
        let a = generate_false_data(&cs, 1.0, 2).unwrap();
        let channel = cs.scenario().compromised()[cs.independent()[0]];
        let clf = Threshold { dim: 20, channel, limit: a.a[channel] - 0.35 };
        let z_a = MeasurementVector(a.a.clone());
        let cfg = AttackConfig::with_size(0.1);
        let res = craft_perturbation(&clf, &cs, &z_a, &a.a, &cfg).unwrap();
        assert!(res.success);
        assert_eq!(res.termination, Termination::Fooled);
        assert!(res.iterations >= 1);
        for s in &res.step_norms {
            assert!((s - 0.1).abs() <= 1e-15);
        }
        for &u in cs.scenario().uncompromised() {
            assert_eq!(res.v[u], 0.0);
        }
        assert!(basis.is_stealthy(&res.a_hat));
    }

    #[test]
    fn zero_gradient_is_reported() {
        let (_, cs) = system();
        let a = generate_false_data(&cs, 1.0, 3).unwrap();
        let res = craft_perturbation(&Flat(20), &cs, &MeasurementVector(a.a.clone()), &a.a, &AttackConfig::default()).unwrap();
        assert!(!res.success);
        assert_eq!(res.termination, Termination::ZeroGradient);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let (_, cs) = system();
        let a = generate_false_data(&cs, 1.0, 4).unwrap();
        let channel = cs.scenario().compromised()[cs.independent()[0]];
        let clf = Threshold { dim: 20, channel, limit: -1e9 };
        let cfg = AttackConfig { size: 0.1, max_iters: 7, padding_offset: None };
        let res = craft_perturbation(&clf, &cs, &MeasurementVector(a.a.clone()), &a.a, &cfg).unwrap();
        assert!(!res.success);
        assert_eq!(res.iterations, 7);
        assert_eq!(res.termination, Termination::IterationCap);
    }

    #[test]
    fn rejects_bad_config() {
        let (_, cs) = system();
        let a = generate_false_data(&cs, 1.0, 5).unwrap();
        let z = MeasurementVector(a.a.clone());
        for cfg in [AttackConfig::with_size(0.0), AttackConfig { max_iters: 0, ..Default::default() }] {
            assert!(craft_perturbation(&Flat(20), &cs, &z, &a.a, &cfg).is_err());
        }
        assert!(craft_perturbation(&Flat(19), &cs, &z, &a.a, &AttackConfig::default()).is_err());
    }

    #[test]
    fn vanilla_scaling() {
        let (basis, cs) = system();
        let a = generate_false_data(&cs, 2.0, 6).unwrap();
        assert_eq!(vanilla_attack(&a, 1.0), a);
        assert_eq!(vanilla_attack(&a, 0.0).a.amax(), 0.0);
        for alpha in [-3.0, 0.5, 7.0] {
            let scaled = vanilla_attack(&a, alpha);
            assert!(basis.violation(&scaled.a) <= alpha.abs() * 1e-8 * a.a.amax().max(1.0));
            assert_eq!(scaled.scenario, a.scenario);
        }
    }
}
