//! Grid cases, the DC measurement matrix and synthetic measurements.
//!
//! Measurements are one active-power flow per branch. Under the DC model the
//! flow on branch `l = (i -> j)` with reactance `x_l` is `(θ_i - θ_j) / x_l`,
//! so `z = H x + e` with `x` the non-reference bus angles.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "ref", default)]
    pub is_reference: bool,
    /// Base-case voltage angle in radians.
    #[serde(rename = "angle", default)]
    pub base_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    #[serde(rename = "from")]
    pub from_bus: usize,
    #[serde(rename = "to")]
    pub to_bus: usize,
    /// Series reactance, per unit.
    #[serde(rename = "x")]
    pub reactance: f64,
}

/// A validated bus/branch network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCase {
    pub name: String,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

#[derive(Deserialize)]
struct RawCase {
    #[serde(default)]
    name: String,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    NativeJson,
    MatpowerSubset,
}

impl CaseFormat {
    /// Guesses the format from a file extension (`.m` is MATPOWER, anything else JSON).
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("m") => CaseFormat::MatpowerSubset,
            _ => CaseFormat::NativeJson,
        }
    }
}

impl GridCase {
    /// Builds a case, checking the reference bus, bus ids, reactances and connectivity.
    pub fn new(name: impl Into<String>, buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self> {
        let refs = buses.iter().filter(|b| b.is_reference).count();
        if refs == 0 {
            return Err(Error::InvalidCase("missing reference bus".into()));
        }
        if refs > 1 {
            return Err(Error::InvalidCase(format!("{refs} reference buses, expected exactly one")));
        }
        let mut ids = HashSet::with_capacity(buses.len());
        for bus in &buses {
            if !ids.insert(bus.id) {
                return Err(Error::InvalidCase(format!("duplicate bus id {}", bus.id)));
            }
            if !bus.base_angle.is_finite() {
                return Err(Error::InvalidCase(format!("bus {} has a non-finite angle", bus.id)));
            }
        }
        for (l, br) in branches.iter().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !ids.contains(&end) {
                    return Err(Error::InvalidCase(format!(
                        "branch {l} references unknown bus {end}"
                    )));
                }
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(Error::InvalidCase(format!(
                    "branch {l} ({}-{}) has nonpositive reactance {}",
                    br.from_bus, br.to_bus, br.reactance
                )));
            }
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidCase(format!("branch {l} is a self loop")));
            }
        }
        let case = GridCase {
            name: name.into(),
            buses,
            branches,
        };
        if !case.is_connected() {
            return Err(Error::InvalidCase("branch graph is disconnected".into()));
        }
        Ok(case)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn reference_bus(&self) -> &Bus {
        self.buses
            .iter()
            .find(|b| b.is_reference)
            .expect("validated case has a reference bus")
    }

    /// Number of measurements (one flow per branch).
    pub fn measurement_count(&self) -> usize {
        self.branches.len()
    }

    /// Number of states (non-reference bus angles).
    pub fn state_count(&self) -> usize {
        self.buses.len() - 1
    }

    /// Non-reference bus ids in ascending order; this is the column order of H.
    pub fn state_bus_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| !b.is_reference)
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Base angles of the state buses, relative to the reference bus.
    pub fn base_state(&self) -> StateVector {
        let reference = self.reference_bus().base_angle;
        let by_id: BTreeMap<usize, f64> = self.buses.iter().map(|b| (b.id, b.base_angle)).collect();
        let angles = self
            .state_bus_ids()
            .iter()
            .map(|id| by_id[id] - reference)
            .collect::<Vec<_>>();
        StateVector(DVector::from_vec(angles))
    }

    fn is_connected(&self) -> bool {
        let index: BTreeMap<usize, usize> =
            self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let mut parent: Vec<usize> = (0..self.buses.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut components = self.buses.len();
        for br in &self.branches {
            let a = find(&mut parent, index[&br.from_bus]);
            let b = find(&mut parent, index[&br.to_bus]);
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components <= 1
    }

    /// Serializes to the native JSON case format.
    pub fn to_native_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid case serializes")
    }
}

/// Parses case text in the given format into a validated [`GridCase`].
pub fn parse_case(text: &str, format: CaseFormat) -> Result<GridCase> {
    match format {
        CaseFormat::NativeJson => {
            let raw: RawCase = serde_json::from_str(text).map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            let name = if raw.name.is_empty() { "unnamed".to_string() } else { raw.name };
            GridCase::new(name, raw.buses, raw.branches)
        }
        CaseFormat::MatpowerSubset => parse_matpower(text),
    }
}

/// Reads a case file from disk, choosing the format from the extension.
pub fn load_case(path: &std::path::Path) -> Result<GridCase> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text, CaseFormat::from_path(path))
}

const MP_BUS_TYPE_REF: f64 = 3.0;

struct MatrixRow {
    line: usize,
    values: Vec<f64>,
}

/// Reads `mpc.bus` (id, type, Va) and `mpc.branch` (from, to, x). Other
/// columns and all other assignments are ignored.
fn parse_matpower(text: &str) -> Result<GridCase> {
    let mut name = String::from("unnamed");
    let mut bus_rows = None;
    let mut branch_rows = None;
    let mut lines = text.lines().enumerate().peekable();

    while let Some((idx, raw_line)) = lines.next() {
        let line = strip_comment(raw_line).trim();
        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, fname)) = rest.split_once('=') {
                name = fname.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else { continue };
        let target = match lhs.trim() {
            "mpc.bus" => &mut bus_rows,
            "mpc.branch" => &mut branch_rows,
            _ => continue,
        };
        let rhs = rhs.trim_start();
        let Some(open) = rhs.strip_prefix('[') else {
            return Err(Error::Parse {
                line: idx + 1,
                column: raw_line.find('=').map_or(1, |c| c + 2),
                message: format!("expected '[' after {}", lhs.trim()),
            });
        };
        let mut rows = Vec::new();
        let mut pending = open.to_string();
        let mut pending_line = idx + 1;
        let mut closed = false;
        loop {
            if let Some(end) = pending.find(']') {
                parse_rows(&pending[..end], pending_line, &mut rows)?;
                closed = true;
                break;
            }
            parse_rows(&pending, pending_line, &mut rows)?;
            match lines.next() {
                Some((i, l)) => {
                    pending = strip_comment(l).to_string();
                    pending_line = i + 1;
                }
                None => break,
            }
        }
        if !closed {
            return Err(Error::Parse {
                line: pending_line,
                column: 1,
                message: format!("unterminated matrix for {}", lhs.trim()),
            });
        }
        *target = Some(rows);
    }

    let bus_rows = bus_rows.ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "missing mpc.bus matrix".into(),
    })?;
    let branch_rows = branch_rows.ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "missing mpc.branch matrix".into(),
    })?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        if row.values.len() < 2 {
            return Err(Error::Parse {
                line: row.line,
                column: 1,
                message: "bus row needs at least id and type".into(),
            });
        }
        buses.push(Bus {
            id: as_id(row.values[0], row.line)?,
            is_reference: row.values[1] == MP_BUS_TYPE_REF,
            base_angle: row.values.get(8).copied().unwrap_or(0.0).to_radians(),
        });
    }
    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        if row.values.len() < 4 {
            return Err(Error::Parse {
                line: row.line,
                column: 1,
                message: "branch row needs at least from, to, r, x".into(),
            });
        }
        branches.push(Branch {
            from_bus: as_id(row.values[0], row.line)?,
            to_bus: as_id(row.values[1], row.line)?,
            reactance: row.values[3],
        });
    }
    GridCase::new(name, buses, branches)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn as_id(v: f64, line: usize) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Parse {
            line,
            column: 1,
            message: format!("bus id {v} is not a nonnegative integer"),
        })
    }
}

fn parse_rows(chunk: &str, line: usize, rows: &mut Vec<MatrixRow>) -> Result<()> {
    for part in chunk.split(';') {
        let mut values = Vec::new();
        let mut column = 1;
        for token in part.split(|c: char| c.is_whitespace() || c == ',') {
            if token.is_empty() {
                column += 1;
                continue;
            }
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line,
                column,
                message: format!("invalid number '{token}'"),
            })?;
            values.push(v);
            column += token.len() + 1;
        }
        if !values.is_empty() {
            rows.push(MatrixRow { line, values });
        }
    }
    Ok(())
}

/// Dense DC measurement matrix: rows are branches, columns non-reference buses.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub h: DMatrix<f64>,
    /// Bus id of each column.
    pub state_buses: Vec<usize>,
}

impl MeasurementMatrix {
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    pub fn n(&self) -> usize {
        self.h.ncols()
    }
}

/// Builds H: row `l` gets `+1/x_l` at the from-bus column and `-1/x_l` at the
/// to-bus column; the reference bus has no column.
pub fn build_h(case: &GridCase) -> MeasurementMatrix {
    let state_buses = case.state_bus_ids();
    let col: BTreeMap<usize, usize> = state_buses.iter().enumerate().map(|(c, &id)| (id, c)).collect();
    let mut h = DMatrix::zeros(case.measurement_count(), state_buses.len());
    for (l, br) in case.branches().iter().enumerate() {
        let y = 1.0 / br.reactance;
        if let Some(&c) = col.get(&br.from_bus) {
            h[(l, c)] += y;
        }
        if let Some(&c) = col.get(&br.to_bus) {
            h[(l, c)] -= y;
        }
    }
    MeasurementMatrix { h, state_buses }
}

/// Voltage angles of the non-reference buses, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

/// Branch active-power flows, per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector(pub DVector<f64>);

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl From<Vec<f64>> for MeasurementVector {
    fn from(v: Vec<f64>) -> Self {
        MeasurementVector(DVector::from_vec(v))
    }
}

/// Base angles plus i.i.d. uniform(-spread, spread) perturbations.
pub fn sample_states(case: &GridCase, count: usize, spread: f64, rng_seed: u64) -> Result<Vec<StateVector>> {
    if !(spread >= 0.0) {
        return Err(Error::InvalidArgument(format!("spread must be >= 0, got {spread}")));
    }
    let base = case.base_state();
    let mut rng = rng_from_seed(rng_seed);
    Ok((0..count)
        .map(|_| {
            let mut x = base.0.clone();
            if spread > 0.0 {
                for v in x.iter_mut() {
                    *v += rng.random_range(-spread..=spread);
                }
            }
            StateVector(x)
        })
        .collect())
}

/// `z = H x + e` with `e ~ N(0, noise_sigma^2)` i.i.d.
pub fn measure(h: &MeasurementMatrix, x: &StateVector, noise_sigma: f64, rng_seed: u64) -> Result<MeasurementVector> {
    if x.0.len() != h.n() {
        return Err(Error::Dimension {
            expected: h.n(),
            actual: x.0.len(),
            context: "state vector length",
        });
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut z = &h.h * &x.0;
    if noise_sigma > 0.0 {
        let mut rng = rng_from_seed(rng_seed);
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for v in z.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(MeasurementVector(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY3: &str = r#"{
        "name": "toy3",
        "buses": [{"id": 1, "ref": true, "angle": 0.0}, {"id": 2, "angle": 0.0}, {"id": 3, "angle": 0.0}],
        "branches": [{"from": 1, "to": 2, "x": 0.5}, {"from": 2, "to": 3, "x": 0.25}, {"from": 1, "to": 3, "x": 0.2}]
    }"#;

    fn toy() -> GridCase {
        parse_case(TOY3, CaseFormat::NativeJson).unwrap()
    }

    #[test]
    fn parses_toy_case() {
        let case = toy();
        assert_eq!(case.measurement_count(), 3);
        assert_eq!(case.reference_bus().id, 1);
        assert_eq!(case.state_count(), 2);
    }

    #[test]
    fn two_branch_variant_is_still_connected() {
        let text = TOY3.replace(r#"{"from": 2, "to": 3, "x": 0.25}, "#, "");
        let case = parse_case(&text, CaseFormat::NativeJson).unwrap();
        assert_eq!(case.measurement_count(), 2);
    }

    #[test]
    fn toy_h_matches_hand_derivation() {
        let h = build_h(&toy());
        let expected = DMatrix::from_row_slice(3, 2, &[-2.0, 0.0, 4.0, -4.0, 0.0, -5.0]);
        assert_eq!(h.h, expected);
        assert_eq!(h.state_buses, vec![2, 3]);
    }

    #[test]
    fn single_branch_h() {
        let text = r#"{"name":"two","buses":[{"id":1,"ref":true},{"id":2}],"branches":[{"from":1,"to":2,"x":1.0}]}"#;
        let h = build_h(&parse_case(text, CaseFormat::NativeJson).unwrap());
        assert_eq!(h.h, DMatrix::from_row_slice(1, 1, &[-1.0]));
    }

    #[test]
    fn rejects_invalid_cases() {
        let no_ref = TOY3.replace(r#""ref": true"#, r#""ref": false"#);
        assert!(matches!(parse_case(&no_ref, CaseFormat::NativeJson), Err(Error::InvalidCase(m)) if m.contains("reference")));

        let dup = TOY3.replace(r#"{"id": 3, "angle": 0.0}"#, r#"{"id": 2, "angle": 0.0}"#);
        assert!(matches!(parse_case(&dup, CaseFormat::NativeJson), Err(Error::InvalidCase(m)) if m.contains("duplicate")));

        let neg = TOY3.replace(r#""x": 0.25"#, r#""x": -0.25"#);
        assert!(matches!(parse_case(&neg, CaseFormat::NativeJson), Err(Error::InvalidCase(m)) if m.contains("reactance")));

        let disconnected = r#"{"buses":[{"id":1,"ref":true},{"id":2},{"id":3},{"id":4}],
            "branches":[{"from":1,"to":2,"x":1.0},{"from":3,"to":4,"x":1.0}]}"#;
        assert!(matches!(parse_case(disconnected, CaseFormat::NativeJson), Err(Error::InvalidCase(m)) if m.contains("disconnected")));
    }

    #[test]
    fn json_syntax_error_has_position() {
        let err = parse_case("{\n  \"buses\": [,]\n}", CaseFormat::NativeJson).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matpower_subset_reads_tables_and_ignores_extras() {
        let text = "function mpc = tiny\n% comment line\nmpc.version = '2';\nmpc.baseMVA = 100;\n\
                    mpc.bus = [\n\t1\t3\t0\t0\t0\t0\t1\t1\t0;  % slack\n\t2\t1\t10\t0\t0\t0\t1\t1\t-5.0;\n\t3\t1 0 0 0 0 1 1 -10 99 77;\n];\n\
                    mpc.gen = [\n 1 0 0;\n];\n\
                    mpc.branch = [\n1, 2, 0.01, 0.5, 0, 0; 2 3 0 0.25 0 0 0 0 0 0 1 -360 360\n 1 3 0.0 0.2 0.1;\n];\n";
        let case = parse_case(text, CaseFormat::MatpowerSubset).unwrap();
        assert_eq!(case.name, "tiny");
        assert_eq!(case.measurement_count(), 3);
        assert_eq!(case.reference_bus().id, 1);
        assert!((case.buses()[1].base_angle - (-5.0f64).to_radians()).abs() < 1e-15);
        assert_eq!(build_h(&case).h, DMatrix::from_row_slice(3, 2, &[-2.0, 0.0, 4.0, -4.0, 0.0, -5.0]));
    }

    #[test]
    fn matpower_bad_number_reports_line() {
        let text = "mpc.bus = [\n1 3 0;\n2 x 0;\n];\nmpc.branch = [1 2 0 1];\n";
        match parse_case(text, CaseFormat::MatpowerSubset).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matpower_missing_branch_table() {
        let err = parse_case("mpc.bus = [1 3 0];", CaseFormat::MatpowerSubset).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn zero_spread_returns_base_angles() {
        let case = toy();
        for s in sample_states(&case, 4, 0.0, 99).unwrap() {
            assert_eq!(s, case.base_state());
        }
        assert!(sample_states(&case, 0, 0.1, 1).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let case = toy();
        assert_eq!(sample_states(&case, 5, 0.1, 3).unwrap(), sample_states(&case, 5, 0.1, 3).unwrap());
        assert_ne!(sample_states(&case, 5, 0.1, 3).unwrap(), sample_states(&case, 5, 0.1, 4).unwrap());
    }

    #[test]
    fn sample_mean_approaches_base() {
        let case = toy();
        let states = sample_states(&case, 10_000, 0.1, 11).unwrap();
        for c in 0..2 {
            let mean = states.iter().map(|s| s.0[c]).sum::<f64>() / states.len() as f64;
            assert!(mean.abs() < 0.01, "component {c} mean {mean}");
        }
    }

    #[test]
    fn noiseless_measurement_is_hx() {
        let h = build_h(&toy());
        let z = measure(&h, &StateVector(DVector::from_vec(vec![0.1, 0.2])), 0.0, 0).unwrap();
        let expected = [-0.2, -0.4, -1.0];
        for (a, b) in z.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn measurement_noise_has_requested_spread() {
        let h = build_h(&toy());
        let x = StateVector(DVector::from_vec(vec![0.1, 0.2]));
        let clean = measure(&h, &x, 0.0, 0).unwrap();
        let n = 10_000;
        let mut sq = [0.0; 3];
        let mut sum = [0.0; 3];
        for seed in 0..n {
            let z = measure(&h, &x, 0.01, seed).unwrap();
            for i in 0..3 {
                let e = z.0[i] - clean.0[i];
                sum[i] += e;
                sq[i] += e * e;
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let std = (sq[i] / n as f64 - mean * mean).sqrt();
            assert!((std - 0.01).abs() < 0.001, "component {i} std {std}");
        }
    }

    #[test]
    fn measure_rejects_wrong_dimension() {
        let h = build_h(&toy());
        let err = measure(&h, &StateVector(DVector::zeros(3)), 0.0, 0).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, actual: 3, .. }));
    }

    #[test]
    fn rows_off_reference_sum_to_zero() {
        let case = toy();
        let h = build_h(&case);
        let reference = case.reference_bus().id;
        for (l, br) in case.branches().iter().enumerate() {
            if br.from_bus != reference && br.to_bus != reference {
                assert_eq!(h.h.row(l).sum(), 0.0);
            }
        }
    }

    #[test]
    fn native_round_trip() {
        let case = toy();
        let again = parse_case(&case.to_native_json(), CaseFormat::NativeJson).unwrap();
        assert_eq!(case, again);
    }
}
