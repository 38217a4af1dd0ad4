//! Stealthy false data injection.
//!
//! An injection `a` leaves the WLS residual untouched iff `B a = 0` with
//! `B = H(HᵀH)⁻¹Hᵀ − I`. Restricting `a` to the compromised channels `C`
//! gives `B′ a′ = 0` with `B′` the columns of `B` at `C`. Row reduction of
//! `B′` splits the `k` compromised coordinates into pivot (dependent) and
//! free (independent) variables; any assignment of the free variables
//! extends uniquely to a vector of `null(B′)` through the dependency matrix.

use std::sync::Arc;

use nalgebra::{linalg::Cholesky, DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MeasurementMatrix;
use crate::rng::{rng_from_seed, Rng};

pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;
/// Tolerance factor used by every `‖B a‖∞` stealth check.
pub const STEALTH_TOL: f64 = 1e-8;

const MAX_REDRAWS: usize = 32;

/// The per-case matrix `B = P − I` shared by all scenarios of that case.
#[derive(Debug, Clone)]
pub struct StealthBasis {
    n: usize,
    b: DMatrix<f64>,
}

impl StealthBasis {
    pub fn new(h: &MeasurementMatrix) -> Result<Self> {
        let gain = Cholesky::new(h.h.tr_mul(&h.h))
            .ok_or_else(|| Error::SingularGain("HᵀH is not positive definite".into()))?;
        let projection = &h.h * gain.solve(&h.h.transpose());
        let b = projection - DMatrix::identity(h.m(), h.m());
        Ok(StealthBasis { n: h.n(), b })
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `m − n`, the number of redundant measurements.
    pub fn redundancy(&self) -> usize {
        self.m() - self.n
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// The orthogonal projector onto `col(H)`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.b + DMatrix::identity(self.m(), self.m())
    }

    /// `‖B a‖∞`.
    pub fn violation(&self, a: &DVector<f64>) -> f64 {
        (&self.b * a).amax()
    }

    /// Whether `‖B a‖∞ ≤ 1e−8 · max(1, ‖a‖∞)`.
    pub fn is_stealthy(&self, a: &DVector<f64>) -> bool {
        self.violation(a) <= STEALTH_TOL * a.amax().max(1.0)
    }
}

/// Compromised measurement indices `C` (sorted) and their complement `U`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRecord", into = "ScenarioRecord")]
pub struct AttackScenario {
    compromised: Vec<usize>,
    uncompromised: Vec<usize>,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRecord {
    k: usize,
    m: usize,
    compromised: Vec<usize>,
}

impl TryFrom<ScenarioRecord> for AttackScenario {
    type Error = Error;

    fn try_from(r: ScenarioRecord) -> Result<Self> {
        let s = AttackScenario::from_indices(r.compromised, r.m)?;
        if s.k() != r.k {
            return Err(Error::InvalidScenario(format!(
                "k = {} but {} indices listed",
                r.k,
                s.k()
            )));
        }
        Ok(s)
    }
}

impl From<AttackScenario> for ScenarioRecord {
    fn from(s: AttackScenario) -> Self {
        ScenarioRecord {
            k: s.k(),
            m: s.m,
            compromised: s.compromised,
        }
    }
}

impl AttackScenario {
    /// Validates indices (sorted on return) without the feasibility bound.
    pub fn from_indices(mut compromised: Vec<usize>, m: usize) -> Result<Self> {
        compromised.sort_unstable();
        if compromised.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScenario("duplicate compromised index".into()));
        }
        if let Some(&last) = compromised.last() {
            if last >= m {
                return Err(Error::InvalidScenario(format!("index {last} outside [0, {m})")));
            }
        }
        let mut uncompromised = Vec::with_capacity(m - compromised.len());
        let mut it = compromised.iter().peekable();
        for i in 0..m {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                uncompromised.push(i);
            }
        }
        Ok(AttackScenario {
            compromised,
            uncompromised,
            m,
        })
    }

    /// Validated scenario that also satisfies `k > m − n`.
    pub fn new(compromised: Vec<usize>, m: usize, n: usize) -> Result<Self> {
        let s = Self::from_indices(compromised, m)?;
        s.check_feasible(n)?;
        Ok(s)
    }

    /// `k` indices drawn uniformly without replacement.
    pub fn random(m: usize, n: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        if k > m {
            return Err(Error::InvalidScenario(format!("k = {k} exceeds m = {m}")));
        }
        Self::new(sample(rng, m, k).into_vec(), m, n)
    }

    pub fn check_feasible(&self, n: usize) -> Result<()> {
        let redundancy = self.m.saturating_sub(n);
        if self.k() <= redundancy {
            return Err(Error::InfeasibleScenario {
                k: self.k(),
                redundancy,
            });
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.compromised.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn compromised(&self) -> &[usize] {
        &self.compromised
    }

    pub fn uncompromised(&self) -> &[usize] {
        &self.uncompromised
    }
}

/// Row-reduced form of `B′` for one scenario.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    basis: Arc<StealthBasis>,
    scenario: AttackScenario,
    /// Positions within `0..k` of the free variables.
    independent: Vec<usize>,
    /// Positions within `0..k` of the pivot variables.
    dependent: Vec<usize>,
    /// `|D| × |I|`: `g_D = dependency · g_I`.
    dependency: DMatrix<f64>,
}

impl ConstraintSystem {
    pub fn basis(&self) -> &StealthBasis {
        &self.basis
    }

    pub fn scenario(&self) -> &AttackScenario {
        &self.scenario
    }

    pub fn independent(&self) -> &[usize] {
        &self.independent
    }

    pub fn dependent(&self) -> &[usize] {
        &self.dependent
    }

    pub fn dependency(&self) -> &DMatrix<f64> {
        &self.dependency
    }

    /// Dimension of `null(B′)`.
    pub fn nullity(&self) -> usize {
        self.independent.len()
    }

    /// Columns of `B` at the compromised indices (`m × k`).
    pub fn b_restricted(&self) -> DMatrix<f64> {
        self.basis.b.select_columns(self.scenario.compromised())
    }

    /// `k × |I|` basis of `null(B′)`: column `j` sets free variable `j` to one.
    pub fn null_basis(&self) -> DMatrix<f64> {
        let k = self.scenario.k();
        let mut basis = DMatrix::zeros(k, self.nullity());
        for (j, &free) in self.independent.iter().enumerate() {
            basis[(free, j)] = 1.0;
            for (r, &dep) in self.dependent.iter().enumerate() {
                basis[(dep, j)] = self.dependency[(r, j)];
            }
        }
        basis
    }

    /// Expands free-variable values into a full `m` vector supported on `C`.
    pub fn assemble(&self, independent_values: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.scenario.m());
        let c = self.scenario.compromised();
        for (&pos, &v) in self.independent.iter().zip(independent_values.iter()) {
            out[c[pos]] = v;
        }
        let dep = &self.dependency * independent_values;
        for (&pos, &v) in self.dependent.iter().zip(dep.iter()) {
            out[c[pos]] = v;
        }
        out
    }
}

/// Builds the constraint system of a scenario by Gauss–Jordan elimination of
/// `B′` with partial pivoting. Columns are visited in index order, so the
/// earliest admissible column becomes a pivot. A column whose best remaining
/// pivot is below `pivot_tol · max|B′|` is free.
pub fn build_constraints(
    basis: &Arc<StealthBasis>,
    scenario: &AttackScenario,
    pivot_tol: f64,
) -> Result<ConstraintSystem> {
    if scenario.m() != basis.m() {
        return Err(Error::Dimension {
            expected: basis.m(),
            actual: scenario.m(),
            context: "scenario measurement count",
        });
    }
    scenario.check_feasible(basis.n())?;
    if !(pivot_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("pivot tolerance must be > 0, got {pivot_tol}")));
    }

    let mut a = basis.b.select_columns(scenario.compromised());
    let (rows, k) = a.shape();
    let threshold = pivot_tol * a.amax();
    let mut dependent = Vec::new();
    let mut independent = Vec::new();
    let mut row = 0;

    for col in 0..k {
        if row == rows {
            independent.push(col);
            continue;
        }
        let (offset, best) = a
            .view((row, col), (rows - row, 1))
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if best <= threshold {
            independent.push(col);
            continue;
        }
        a.swap_rows(row, row + offset);
        let pivot = a[(row, col)];
        for j in col..k {
            a[(row, j)] /= pivot;
        }
        for r in 0..rows {
            if r == row {
                continue;
            }
            let factor = a[(r, col)];
            if factor != 0.0 {
                for j in col..k {
                    let delta = factor * a[(row, j)];
                    a[(r, j)] -= delta;
                }
            }
        }
        dependent.push(col);
        row += 1;
    }

    let required = scenario.k() - basis.redundancy();
    if independent.len() < required {
        return Err(Error::Numerical(format!(
            "row reduction found nullity {} but at least {required} is guaranteed; \
             pivot tolerance {pivot_tol} is too loose for this scenario",
            independent.len()
        )));
    }

    let mut dependency = DMatrix::zeros(dependent.len(), independent.len());
    for r in 0..dependent.len() {
        for (j, &free) in independent.iter().enumerate() {
            dependency[(r, j)] = -a[(r, free)];
        }
    }

    let cs = ConstraintSystem {
        basis: Arc::clone(basis),
        scenario: scenario.clone(),
        independent,
        dependent,
        dependency,
    };

    // The reduced system can hide near-dependent pivots; verify the basis
    // against the original columns.
    let null = cs.null_basis();
    let check = cs.b_restricted() * &null;
    for j in 0..null.ncols() {
        let scale = null.column(j).amax().max(1.0);
        let violation = check.column(j).amax();
        if violation > STEALTH_TOL * scale {
            return Err(Error::Numerical(format!(
                "null basis vector {j} violates B′g = 0 by {violation:e}; \
                 the scenario is too ill-conditioned for pivot tolerance {pivot_tol}"
            )));
        }
    }
    Ok(cs)
}

/// Maps `g` onto the stealth solution space: zero on `U`, independent
/// coordinates kept, dependent coordinates recomputed.
pub fn project_to_nullspace(cs: &ConstraintSystem, g: &DVector<f64>) -> DVector<f64> {
    let c = cs.scenario.compromised();
    let free = DVector::from_iterator(cs.independent.len(), cs.independent.iter().map(|&p| g[c[p]]));
    cs.assemble(&free)
}

/// An injection supported on the scenario's compromised channels with `B a = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FalseDataVector {
    pub a: DVector<f64>,
    pub scenario: AttackScenario,
}

impl FalseDataVector {
    /// Checks the support (`a_U = 0`) and stealth invariants.
    pub fn is_valid(&self, basis: &StealthBasis) -> bool {
        self.scenario.uncompromised().iter().all(|&u| self.a[u] == 0.0) && basis.is_stealthy(&self.a)
    }
}

/// Draws standard-normal free coordinates, assembles them and rescales to
/// `‖a‖₁ = target_l1`.
pub fn generate_false_data(cs: &ConstraintSystem, target_l1: f64, rng_seed: u64) -> Result<FalseDataVector> {
    if !(target_l1 > 0.0) || !target_l1.is_finite() {
        return Err(Error::InvalidArgument(format!("target L1 must be > 0, got {target_l1}")));
    }
    let mut rng = rng_from_seed(rng_seed);
    for _ in 0..MAX_REDRAWS {
        let free = DVector::from_fn(cs.nullity(), |_, _| StandardNormal.sample(&mut rng));
        let a = cs.assemble(&free);
        let l1 = a.lp_norm(1);
        if l1 > 0.0 && l1.is_finite() {
            return Ok(FalseDataVector {
                a: a * (target_l1 / l1),
                scenario: cs.scenario.clone(),
            });
        }
    }
    Err(Error::Numerical(format!("{MAX_REDRAWS} consecutive degenerate false-data draws")))
}

/// Injection magnitude: Gaussian with mean 5% and standard deviation 1% of
/// the mean legitimate L1 norm, redrawn until positive.
pub fn sample_target_l1(mean_l1_of_legit: f64, rng_seed: u64) -> Result<f64> {
    if !(mean_l1_of_legit > 0.0) || !mean_l1_of_legit.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mean legitimate L1 must be > 0, got {mean_l1_of_legit}"
        )));
    }
    let mean = 0.05 * mean_l1_of_legit;
    let normal = Normal::new(mean, 0.01 * mean_l1_of_legit).expect("finite parameters");
    let mut rng = rng_from_seed(rng_seed);
    for _ in 0..100 {
        let v: f64 = normal.sample(&mut rng);
        if v > 0.0 {
            return Ok(v);
        }
    }
    Ok(mean)
}

/// Uniform draw of `k` in `[k_min, k_max]`.
pub fn sample_k(k_min: usize, k_max: usize, rng: &mut Rng) -> usize {
    rng.random_range(k_min..=k_max)
}
