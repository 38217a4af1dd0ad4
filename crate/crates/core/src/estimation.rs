//! Weighted least-squares DC state estimation and the residual bad-data test.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::grid::{MeasurementMatrix, MeasurementVector, StateVector};

pub const DEFAULT_FALSE_ALARM_RATE: f64 = 0.01;

/// WLS estimator with a cached Cholesky factor of the gain matrix `HᵀWH`.
#[derive(Debug, Clone)]
pub struct Estimator {
    h: DMatrix<f64>,
    weights: DVector<f64>,
    gain: Cholesky<f64, Dyn>,
    tau: Option<f64>,
}

impl Estimator {
    /// Identity weights.
    pub fn new(h: &MeasurementMatrix) -> Result<Self> {
        Self::with_weights(h, DVector::from_element(h.m(), 1.0))
    }

    pub fn with_weights(h: &MeasurementMatrix, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != h.m() {
            return Err(Error::Dimension {
                expected: h.m(),
                actual: weights.len(),
                context: "weight vector length",
            });
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("measurement weights must be positive".into()));
        }
        let mut weighted = h.h.clone();
        for (mut row, w) in weighted.row_iter_mut().zip(weights.iter()) {
            row *= *w;
        }
        let gain_matrix = h.h.transpose() * weighted;
        let gain = Cholesky::new(gain_matrix).ok_or_else(|| {
            Error::SingularGain("HᵀWH is not positive definite (is the network observable?)".into())
        })?;
        Ok(Estimator {
            h: h.h.clone(),
            weights,
            gain,
            tau: None,
        })
    }

    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Installs a threshold directly (e.g. one read back from a config).
    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be finite and >= 0, got {tau}")));
        }
        self.tau = Some(tau);
        Ok(())
    }

    fn check(&self, z: &MeasurementVector) -> Result<()> {
        if z.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                actual: z.len(),
                context: "measurement vector length",
            });
        }
        Ok(())
    }

    /// `x̂ = (HᵀWH)⁻¹ HᵀW z`, solved through the cached factor.
    pub fn estimate(&self, z: &MeasurementVector) -> Result<StateVector> {
        self.check(z)?;
        let wz = z.0.component_mul(&self.weights);
        let rhs = self.h.tr_mul(&wz);
        Ok(StateVector(self.gain.solve(&rhs)))
    }

    /// `‖z − H x̂‖₂`.
    pub fn residual_norm(&self, z: &MeasurementVector) -> Result<f64> {
        let x = self.estimate(z)?;
        Ok((&z.0 - &self.h * &x.0).norm())
    }

    /// Sets `tau` to the empirical `(1 − rate)` quantile of the clean residuals
    /// (linear interpolation between order statistics) and returns it.
    pub fn calibrate_tau(&mut self, clean: &[MeasurementVector], false_alarm_rate: f64) -> Result<f64> {
        if clean.is_empty() {
            return Err(Error::EmptyData("calibration needs at least one clean measurement"));
        }
        if !(false_alarm_rate > 0.0 && false_alarm_rate < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "false alarm rate must lie in (0, 1), got {false_alarm_rate}"
            )));
        }
        let mut residuals = clean
            .iter()
            .map(|z| self.residual_norm(z))
            .collect::<Result<Vec<_>>>()?;
        residuals.sort_by(f64::total_cmp);
        let tau = quantile_sorted(&residuals, 1.0 - false_alarm_rate);
        self.tau = Some(tau);
        Ok(tau)
    }

    /// True when the measurement is flagged as bad data.
    pub fn detect(&self, z: &MeasurementVector) -> Result<bool> {
        let tau = self.tau.ok_or(Error::Uncalibrated)?;
        Ok(self.residual_norm(z)? > tau)
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_h, measure, parse_case, sample_states, CaseFormat};
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    const TOY3: &str = r#"{"name":"toy3","buses":[{"id":1,"ref":true},{"id":2},{"id":3}],
        "branches":[{"from":1,"to":2,"x":0.5},{"from":2,"to":3,"x":0.25},{"from":1,"to":3,"x":0.2}]}"#;

    fn toy_h() -> MeasurementMatrix {
        build_h(&parse_case(TOY3, CaseFormat::NativeJson).unwrap())
    }

    #[test]
    fn consistent_system_recovers_state() {
        let h = toy_h();
        let est = Estimator::new(&h).unwrap();
        let z = MeasurementVector::from(vec![-0.2, -0.4, -1.0]);
        let x = est.estimate(&z).unwrap();
        assert!((x.0[0] - 0.1).abs() < 1e-10);
        assert!((x.0[1] - 0.2).abs() < 1e-10);
        assert!(est.residual_norm(&z).unwrap() < 1e-10);
    }

    #[test]
    fn uniform_weight_scaling_is_invisible() {
        let h = toy_h();
        let base = Estimator::new(&h).unwrap();
        let scaled = Estimator::with_weights(&h, DVector::from_element(3, 7.0)).unwrap();
        let z = MeasurementVector::from(vec![-0.25, -0.35, -1.1]);
        let (a, b) = (base.estimate(&z).unwrap(), scaled.estimate(&z).unwrap());
        assert!((a.0 - b.0).amax() < 1e-12);
        let (ra, rb) = (base.residual_norm(&z).unwrap(), scaled.residual_norm(&z).unwrap());
        assert!((ra - rb).abs() < 1e-12);
    }

    #[test]
    fn square_full_rank_system_has_zero_residual() {
        let text = r#"{"buses":[{"id":1,"ref":true},{"id":2}],"branches":[{"from":1,"to":2,"x":1.0}]}"#;
        let h = build_h(&parse_case(text, CaseFormat::NativeJson).unwrap());
        let est = Estimator::new(&h).unwrap();
        assert!(est.residual_norm(&MeasurementVector::from(vec![3.7])).unwrap() < 1e-15);
    }

    #[test]
    fn rejects_bad_weights_and_dimensions() {
        let h = toy_h();
        assert!(Estimator::with_weights(&h, DVector::from_vec(vec![1.0, 0.0, 1.0])).is_err());
        assert!(Estimator::with_weights(&h, DVector::from_vec(vec![1.0, 1.0])).is_err());
        let est = Estimator::new(&h).unwrap();
        assert!(matches!(
            est.estimate(&MeasurementVector::from(vec![1.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn detect_requires_calibration() {
        let est = Estimator::new(&toy_h()).unwrap();
        assert!(matches!(est.detect(&MeasurementVector::from(vec![0.0; 3])), Err(Error::Uncalibrated)));
    }

    #[test]
    fn calibration_edge_cases() {
        let h = toy_h();
        let mut est = Estimator::new(&h).unwrap();
        assert!(matches!(est.calibrate_tau(&[], 0.01), Err(Error::EmptyData(_))));
        assert!(est.calibrate_tau(&[MeasurementVector::from(vec![0.0; 3])], 1.0).is_err());

        let case = parse_case(TOY3, CaseFormat::NativeJson).unwrap();
        let clean: Vec<_> = sample_states(&case, 20, 0.1, 1)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, x)| measure(&h, x, 0.0, i as u64).unwrap())
            .collect();
        let tau = est.calibrate_tau(&clean, 0.01).unwrap();
        assert!(tau < 1e-12);
    }

    #[test]
    fn half_rate_gives_median() {
        let case = parse_case(TOY3, CaseFormat::NativeJson).unwrap();
        let h = build_h(&case);
        let mut est = Estimator::new(&h).unwrap();
        let clean: Vec<_> = sample_states(&case, 101, 0.1, 5)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, x)| measure(&h, x, 0.05, i as u64).unwrap())
            .collect();
        let tau = est.calibrate_tau(&clean, 0.5).unwrap();
        let mut r: Vec<f64> = clean.iter().map(|z| est.residual_norm(z).unwrap()).collect();
        r.sort_by(f64::total_cmp);
        assert_eq!(tau, r[50]);
    }

    #[test]
    fn false_alarm_rate_is_respected() {
        let case = parse_case(TOY3, CaseFormat::NativeJson).unwrap();
        let h = build_h(&case);
        let mut est = Estimator::new(&h).unwrap();
        let clean: Vec<_> = sample_states(&case, 10_000, 0.1, 8)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, x)| measure(&h, x, 0.01, 1000 + i as u64).unwrap())
            .collect();
        est.calibrate_tau(&clean, 0.01).unwrap();
        let flagged = clean.iter().filter(|z| est.detect(z).unwrap()).count();
        assert!((90..=110).contains(&flagged), "flagged {flagged}");
    }

    #[test]
    fn orthogonal_residual_is_flagged_and_column_space_shift_is_not() {
        let case = parse_case(TOY3, CaseFormat::NativeJson).unwrap();
        let h = build_h(&case);
        let mut est = Estimator::new(&h).unwrap();
        let clean: Vec<_> = sample_states(&case, 200, 0.1, 2)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, x)| measure(&h, x, 0.01, i as u64).unwrap())
            .collect();
        let tau = est.calibrate_tau(&clean, 0.01).unwrap();
        assert!(tau > 0.0);

        let z = clean.iter().find(|z| !est.detect(z).unwrap()).unwrap().clone();
        let shifted = MeasurementVector(&z.0 + &h.h * DVector::from_vec(vec![0.3, -0.7]));
        assert!(!est.detect(&shifted).unwrap());

        // Project a random vector onto the orthogonal complement of col(H).
        let mut rng = rng_from_seed(4);
        let r = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let q = h.h.clone().qr().q();
        let r_perp = &r - &q * q.tr_mul(&r);
        let r_perp = r_perp.normalize() * (100.0 * tau);
        let bad = MeasurementVector(&z.0 + r_perp);
        assert!(est.detect(&bad).unwrap());
    }

    #[test]
    fn estimate_is_idempotent() {
        let h = toy_h();
        let est = Estimator::new(&h).unwrap();
        let z = MeasurementVector::from(vec![0.3, -0.1, 0.45]);
        let x = est.estimate(&z).unwrap();
        let again = est.estimate(&MeasurementVector(&h.h * &x.0)).unwrap();
        assert!((x.0 - again.0).amax() < 1e-12);
    }
}
