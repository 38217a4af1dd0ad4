use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CaseContext, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fdia::{build_constraints, generate_false_data, sample_k, sample_target_l1, AttackScenario, ConstraintSystem};
use crate::grid::{measure, sample_states, MeasurementVector, StateVector};
use crate::neural::{Sample, FALSE, NORMAL};
use crate::rng::{derive_seed, rng_from_seed};

/// Noise redraws allowed before a false sample is declared impossible to hide.
const MAX_NOISE_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub values: Vec<f64>,
    pub label: usize,
    pub scenario_id: Option<usize>,
    /// The injected vector of a false sample.
    pub a: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub master_seed: u64,
    pub k_min: usize,
    pub k_max: usize,
    pub state_spread: f64,
    pub noise_sigma: f64,
    pub rows: usize,
    pub pollution_fraction: f64,
    pub mean_l1: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub case_name: String,
    pub samples: Vec<MeasurementSample>,
    pub scenarios: Vec<AttackScenario>,
    pub generation: GenerationInfo,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn m(&self) -> usize {
        self.samples.first().map_or(0, |s| s.values.len())
    }

    pub fn count_label(&self, label: usize) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn to_samples(&self) -> Vec<Sample> {
        self.samples.iter().map(|s| Sample { input: s.values.clone(), label: s.label }).collect()
    }

    pub fn scenario_of(&self, index: usize) -> Option<&AttackScenario> {
        self.samples[index].scenario_id.map(|id| &self.scenarios[id])
    }

    /// Constraint systems aligned with `self.scenarios`.
    pub fn constraint_systems(&self, ctx: &CaseContext) -> Result<Vec<ConstraintSystem>> {
        self.scenarios.iter().map(|s| build_constraints(&ctx.basis, s, ctx.pivot_tol)).collect()
    }

    /// Checks labels, provenance, support and stealth of every row.
    pub fn validate(&self, ctx: &CaseContext) -> Result<()> {
        let m = ctx.m();
        for (i, s) in self.samples.iter().enumerate() {
            if s.values.len() != m {
                return Err(Error::Dimension { expected: m, actual: s.values.len(), context: "dataset row" });
            }
            match (s.label, s.scenario_id, &s.a) {
                (NORMAL, None, None) => {}
                (FALSE, Some(id), Some(a)) => {
                    let scenario = self
                        .scenarios
                        .get(id)
                        .ok_or_else(|| Error::Corrupt(format!("row {i}: scenario {id} missing")))?;
                    let a = DVector::from_column_slice(a);
                    if a.len() != m || scenario.uncompromised().iter().any(|&u| a[u] != 0.0) || !ctx.basis.is_stealthy(&a) {
                        return Err(Error::Corrupt(format!("row {i}: injected vector violates its scenario")));
                    }
                }
                _ => return Err(Error::Corrupt(format!("row {i}: label and provenance disagree"))),
            }
        }
        Ok(())
    }

    /// Rows at `indices`, keeping the scenario table.
    pub fn subset(&self, name: &str, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            case_name: self.case_name.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            scenarios: self.scenarios.clone(),
            generation: self.generation.clone(),
        }
    }
}

/// A test set whose rows share one compromised set, with its constraint system.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub dataset: Dataset,
    pub system: ConstraintSystem,
}

impl TestSet {
    pub fn from_dataset(ctx: &CaseContext, dataset: Dataset) -> Result<Self> {
        if dataset.scenarios.len() != 1 || dataset.samples.iter().any(|s| s.scenario_id != Some(0)) {
            return Err(Error::InvalidArgument(format!(
                "test set {} must contain false rows of exactly one scenario",
                dataset.name
            )));
        }
        let system = build_constraints(&ctx.basis, &dataset.scenarios[0], ctx.pivot_tol)?;
        Ok(TestSet { dataset, system })
    }

    pub fn k(&self) -> usize {
        self.system.scenario().k()
    }
}

fn generation_info(ctx: &CaseContext, cfg: &ExperimentConfig, k_min: usize, k_max: usize, rows: usize, pollution: f64) -> GenerationInfo {
    GenerationInfo {
        master_seed: cfg.master_seed,
        k_min,
        k_max,
        state_spread: cfg.state_spread,
        noise_sigma: cfg.noise_sigma,
        rows,
        pollution_fraction: pollution,
        mean_l1: ctx.mean_l1,
        tau: ctx.tau(),
    }
}

fn check_k(ctx: &CaseContext, k: usize) -> Result<()> {
    let redundancy = ctx.basis.redundancy();
    if k <= redundancy || k > ctx.m() {
        return Err(Error::InfeasibleScenario { k, redundancy });
    }
    Ok(())
}

/// `z + a` for a state, redrawing the noise until the residual test passes.
fn hidden_false_measurement(
    ctx: &CaseContext,
    cfg: &ExperimentConfig,
    x: &StateVector,
    a: &DVector<f64>,
    stream: &str,
    index: u64,
) -> Result<MeasurementVector> {
    for attempt in 0..MAX_NOISE_REDRAWS {
        let seed = derive_seed(cfg.seed(stream, index), "redraw", attempt);
        let z = measure(&ctx.h, x, cfg.noise_sigma, seed)?;
        let z_a = MeasurementVector(z.0 + a);
        if !ctx.estimator.detect(&z_a)? {
            return Ok(z_a);
        }
    }
    Err(Error::Numerical(format!(
        "false sample {index} of {stream} stayed above tau after {MAX_NOISE_REDRAWS} noise draws"
    )))
}

/// The training set: `train_rows` legitimate vectors of which a
/// `pollution_fraction` share receives a stealthy injection with its own
/// random compromised set of size `k ∈ [k_min, k_max]`.
///
/// Every false row passes the residual test: the noise of its base frame is
/// redrawn while `z + a` would be flagged.
pub fn build_train_set(ctx: &CaseContext, cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let rows = cfg.train_rows;
    let n_false = (rows as f64 * cfg.pollution_fraction).round() as usize;
    if n_false > 0 {
        check_k(ctx, cfg.k_min)?;
        check_k(ctx, cfg.k_max)?;
    }
    let states = sample_states(&ctx.case, rows, cfg.state_spread, cfg.seed("train-states", 0))?;
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng_from_seed(cfg.seed("train-pollution", 0)));
    let mut polluted = vec![false; rows];
    for &i in &order[..n_false] {
        polluted[i] = true;
    }

    let mut samples = Vec::with_capacity(rows);
    let mut scenarios = Vec::with_capacity(n_false);
    for (i, x) in states.iter().enumerate() {
        let idx = i as u64;
        if !polluted[i] {
            let z = measure(&ctx.h, x, cfg.noise_sigma, cfg.seed("train-noise", idx))?;
            samples.push(MeasurementSample { values: z.0.as_slice().to_vec(), label: NORMAL, scenario_id: None, a: None });
            continue;
        }
        let mut rng = rng_from_seed(cfg.seed("train-scenario", idx));
        let k = sample_k(cfg.k_min, cfg.k_max, &mut rng);
        let scenario = AttackScenario::random(ctx.m(), ctx.h.n(), k, &mut rng)?;
        let cs = build_constraints(&ctx.basis, &scenario, ctx.pivot_tol)?;
        let target = sample_target_l1(ctx.mean_l1, cfg.seed("train-l1", idx))?;
        let f = generate_false_data(&cs, target, cfg.seed("train-injection", idx))?;
        let z_a = hidden_false_measurement(ctx, cfg, x, &f.a, "train-noise", idx)?;
        samples.push(MeasurementSample {
            values: z_a.0.as_slice().to_vec(),
            label: FALSE,
            scenario_id: Some(scenarios.len()),
            a: Some(f.a.as_slice().to_vec()),
        });
        scenarios.push(scenario);
    }
    Ok(Dataset {
        name: "train".into(),
        case_name: ctx.case.name.clone(),
        samples,
        scenarios,
        generation: generation_info(ctx, cfg, cfg.k_min, cfg.k_max, rows, cfg.pollution_fraction),
    })
}

/// Random `(train, test)` partition with `round(len · test_fraction)` test rows.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_test = (dataset.len() as f64 * test_fraction).round() as usize;
    let (test, train) = order.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&format!("{}-train", dataset.name), &train), dataset.subset(&format!("{}-test", dataset.name), &test)))
}

/// One test set per `k` in `cfg.test_k`: a single random compromised set and
/// `cfg.test_per_set` false rows, all hidden from the residual test.
pub fn build_test_sets(ctx: &CaseContext, cfg: &ExperimentConfig) -> Result<Vec<TestSet>> {
    cfg.validate()?;
    let mut sets = Vec::with_capacity(cfg.test_k.len());
    for (j, &k) in cfg.test_k.iter().enumerate() {
        check_k(ctx, k)?;
        let j = j as u64;
        let mut rng = rng_from_seed(cfg.seed("test-scenario", j));
        let scenario = AttackScenario::random(ctx.m(), ctx.h.n(), k, &mut rng)?;
        let cs = build_constraints(&ctx.basis, &scenario, ctx.pivot_tol)?;
        let states = sample_states(&ctx.case, cfg.test_per_set, cfg.state_spread, cfg.seed("test-states", j))?;
        let stream = format!("test-{k}-noise");
        let mut samples = Vec::with_capacity(cfg.test_per_set);
        for (i, x) in states.iter().enumerate() {
            let idx = derive_seed(j, "row", i as u64);
            let target = sample_target_l1(ctx.mean_l1, cfg.seed("test-l1", idx))?;
            let f = generate_false_data(&cs, target, cfg.seed("test-injection", idx))?;
            let z_a = hidden_false_measurement(ctx, cfg, x, &f.a, &stream, i as u64)?;
            samples.push(MeasurementSample {
                values: z_a.0.as_slice().to_vec(),
                label: FALSE,
                scenario_id: Some(0),
                a: Some(f.a.as_slice().to_vec()),
            });
        }
        let dataset = Dataset {
            name: format!("case{k}"),
            case_name: ctx.case.name.clone(),
            samples,
            scenarios: vec![scenario],
            generation: generation_info(ctx, cfg, k, k, cfg.test_per_set, 1.0),
        };
        sets.push(TestSet { dataset, system: cs });
    }
    Ok(sets)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    name: String,
    case_name: String,
    generation: GenerationInfo,
    scenarios: Vec<AttackScenario>,
    /// `(row, a)` for every false row; omitted in the binary container.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    injections: Vec<(usize, Vec<f64>)>,
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `label,k,scenario_id,z_0..z_{m-1}` rows plus a JSON sidecar
/// (same stem, `.json`) holding the scenarios and injected vectors.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec!["label".to_string(), "k".into(), "scenario_id".into()];
    header.extend((0..dataset.m()).map(|i| format!("z_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut injections = Vec::new();
    for (row, s) in dataset.samples.iter().enumerate() {
        let mut rec = vec![
            s.label.to_string(),
            dataset.scenario_of(row).map_or(String::new(), |c| c.k().to_string()),
            s.scenario_id.map_or(String::new(), |id| id.to_string()),
        ];
        rec.extend(s.values.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(csv_err)?;
        if let Some(a) = &s.a {
            injections.push((row, a.clone()));
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        name: dataset.name.clone(),
        case_name: dataset.case_name.clone(),
        generation: dataset.generation.clone(),
        scenarios: dataset.scenarios.clone(),
        injections,
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_vec(&sidecar).expect("sidecar serializes")).map_err(|e| Error::io(&side, e))
}

fn parse_field<T: std::str::FromStr>(text: &str, line: usize, column: usize) -> Result<T> {
    text.parse().map_err(|_| Error::Parse { line, column, message: format!("cannot parse {text:?}") })
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: format!("{}: {e}", side.display()),
    })?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, column: 1, message: e.to_string() })?;
        if rec.len() < 3 {
            return Err(Error::Parse { line, column: 1, message: "expected label, k, scenario_id and values".into() });
        }
        let label: usize = parse_field(&rec[0], line, 1)?;
        let scenario_id = if rec[2].is_empty() { None } else { Some(parse_field(&rec[2], line, 3)?) };
        let values = (3..rec.len()).map(|c| parse_field(&rec[c], line, c + 1)).collect::<Result<Vec<f64>>>()?;
        samples.push(MeasurementSample { values, label, scenario_id, a: None });
    }
    for (row, a) in sidecar.injections {
        let s = samples.get_mut(row).ok_or_else(|| Error::Corrupt(format!("injection for missing row {row}")))?;
        s.a = Some(a);
    }
    Ok(Dataset {
        name: sidecar.name,
        case_name: sidecar.case_name,
        samples,
        scenarios: sidecar.scenarios,
        generation: sidecar.generation,
    })
}

const BIN_MAGIC: &[u8; 4] = b"GPDS";
const BIN_VERSION: u32 = 1;

/// Compact little-endian container: magic, version, sidecar JSON, then rows
/// of `label u8, scenario u64 (MAX = none), m f64, has_a u8, [m f64]`.
pub fn write_dataset_bin(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let sidecar = Sidecar {
        name: dataset.name.clone(),
        case_name: dataset.case_name.clone(),
        generation: dataset.generation.clone(),
        scenarios: dataset.scenarios.clone(),
        injections: Vec::new(),
    };
    let side = serde_json::to_vec(&sidecar).expect("sidecar serializes");
    let m = dataset.m();
    let mut buf = Vec::with_capacity(32 + side.len());
    buf.extend_from_slice(BIN_MAGIC);
    buf.extend_from_slice(&BIN_VERSION.to_le_bytes());
    buf.extend_from_slice(&(side.len() as u64).to_le_bytes());
    buf.extend_from_slice(&side);
    buf.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(m as u64).to_le_bytes());
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    for s in &dataset.samples {
        buf.clear();
        buf.push(s.label as u8);
        buf.extend_from_slice(&s.scenario_id.map_or(u64::MAX, |v| v as u64).to_le_bytes());
        for v in &s.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        match &s.a {
            Some(a) => {
                buf.push(1);
                for v in a {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => buf.push(0),
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset_bin(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != BIN_MAGIC {
        return Err(Error::Corrupt(format!("{} is not a dataset container", path.display())));
    }
    let version = cur.u32()?;
    if version != BIN_VERSION {
        return Err(Error::Version { found: version, supported: BIN_VERSION });
    }
    let side_len = cur.u64()? as usize;
    let sidecar: Sidecar = serde_json::from_slice(cur.take(side_len)?).map_err(|e| Error::Corrupt(e.to_string()))?;
    let rows = cur.u64()? as usize;
    let m = cur.u64()? as usize;
    let mut samples = Vec::with_capacity(rows.min(1 << 20));
    for _ in 0..rows {
        let label = cur.take(1)?[0] as usize;
        let sid = cur.u64()?;
        let values = cur.f64s(m)?;
        let a = match cur.take(1)?[0] {
            0 => None,
            1 => Some(cur.f64s(m)?),
            _ => return Err(Error::Corrupt("bad injection flag".into())),
        };
        samples.push(MeasurementSample { values, label, scenario_id: (sid != u64::MAX).then_some(sid as usize), a });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after last row".into()));
    }
    Ok(Dataset {
        name: sidecar.name,
        case_name: sidecar.case_name,
        samples,
        scenarios: sidecar.scenarios,
        generation: sidecar.generation,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt("dataset container is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("row width overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(rows: usize) -> (CaseContext, ExperimentConfig) {
        let cfg = ExperimentConfig { train_rows: rows, test_per_set: 20, calibration_count: 400, ..ExperimentConfig::desk() };
        (CaseContext::from_config(&cfg).unwrap(), cfg)
    }

    #[test]
    fn train_set_has_balanced_hidden_false_rows() {
        let (ctx, cfg) = desk(200);
        let d = build_train_set(&ctx, &cfg).unwrap();
        assert_eq!(d.len(), 200);
        assert_eq!(d.count_label(FALSE), 100);
        assert_eq!(d.scenarios.len(), 100);
        d.validate(&ctx).unwrap();
        for s in d.samples.iter().filter(|s| s.label == FALSE) {
            let k = d.scenarios[s.scenario_id.unwrap()].k();
            assert!((cfg.k_min..=cfg.k_max).contains(&k));
            assert!(!ctx.estimator.detect(&MeasurementVector::from(s.values.clone())).unwrap());
        }
        assert_eq!(build_train_set(&ctx, &cfg).unwrap(), d);
    }

    #[test]
    fn zero_pollution_gives_only_legitimate_rows() {
        let (ctx, cfg) = desk(50);
        let cfg = ExperimentConfig { pollution_fraction: 0.0, ..cfg };
        let d = build_train_set(&ctx, &cfg).unwrap();
        assert_eq!(d.count_label(NORMAL), 50);
        assert!(d.scenarios.is_empty());
    }

    #[test]
    fn infeasible_k_range_is_rejected() {
        let (ctx, cfg) = desk(20);
        let cfg = ExperimentConfig { k_min: 7, ..cfg };
        assert!(matches!(build_train_set(&ctx, &cfg), Err(Error::InfeasibleScenario { k: 7, redundancy: 7 })));
    }

    #[test]
    fn test_sets_share_one_scenario() {
        let (ctx, cfg) = desk(10);
        let sets = build_test_sets(&ctx, &cfg).unwrap();
        assert_eq!(sets.len(), 4);
        for (set, &k) in sets.iter().zip(&cfg.test_k) {
            assert_eq!(set.k(), k);
            assert_eq!(set.dataset.len(), 20);
            assert_eq!(set.dataset.count_label(FALSE), 20);
            set.dataset.validate(&ctx).unwrap();
        }
    }

    #[test]
    fn split_partitions_rows() {
        let (ctx, cfg) = desk(100);
        let d = build_train_set(&ctx, &cfg).unwrap();
        let (train, test) = split(&d, 0.15, 3).unwrap();
        assert_eq!(test.len(), 15);
        assert_eq!(train.len(), 85);
        let mut all: Vec<_> = train.samples.iter().chain(&test.samples).map(|s| s.values.clone()).collect();
        all.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut orig: Vec<_> = d.samples.iter().map(|s| s.values.clone()).collect();
        orig.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(all, orig);
    }

    #[test]
    fn csv_and_binary_round_trip_exactly() {
        let (ctx, cfg) = desk(30);
        let d = build_train_set(&ctx, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("train.csv");
        write_dataset_csv(&d, &csv_path).unwrap();
        assert_eq!(read_dataset_csv(&csv_path).unwrap(), d);
        let bin_path = dir.path().join("train.bin");
        write_dataset_bin(&d, &bin_path).unwrap();
        assert_eq!(read_dataset_bin(&bin_path).unwrap(), d);

        let bytes = std::fs::read(&bin_path).unwrap();
        std::fs::write(&bin_path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset_bin(&bin_path), Err(Error::Corrupt(_))));
        let header = std::fs::read_to_string(&csv_path).unwrap();
        assert!(header.starts_with("label,k,scenario_id,z_0,"));
    }
}
