use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::{MetricsReport, VanillaTable};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["case", "k", "size", "recall", "bias_l2", "valid_l2", "n_success", "n_total"];

/// JSON Schema (draft 2020-12) of the JSON report.
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?} (expected csv or json)"))),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

pub fn export_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => {
            let mut w = csv_writer(path)?;
            w.write_record(CSV_HEADER).map_err(csv_err(path))?;
            for r in &report.rows {
                w.write_record([
                    r.case.clone(),
                    r.k.to_string(),
                    num(r.size),
                    num(r.recall),
                    opt(r.bias_l2),
                    opt(r.valid_l2),
                    r.n_success.to_string(),
                    r.n_total.to_string(),
                ])
                .map_err(csv_err(path))?;
            }
            finish(w, path)
        }
    }
}

pub fn export_vanilla(table: &VanillaTable, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let bytes = serde_json::to_vec_pretty(table).expect("table serializes");
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => {
            let mut w = csv_writer(path)?;
            w.write_record(["case", "k", "alpha", "recall", "bias_l2", "valid_l2", "n_success", "n_total"])
                .map_err(csv_err(path))?;
            for r in &table.rows {
                w.write_record([
                    r.case.clone(),
                    r.k.to_string(),
                    num(r.alpha),
                    num(r.recall),
                    opt(r.bias_l2),
                    opt(r.valid_l2),
                    r.n_success.to_string(),
                    r.n_total.to_string(),
                ])
                .map_err(csv_err(path))?;
            }
            finish(w, path)
        }
    }
}

/// Writes `class,v_0..v_{m-1}` rows for external embedding tools.
pub fn export_vectors(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let width = rows.first().map_or(0, |r| r.1.len());
    let mut line = String::from("class");
    for i in 0..width {
        line.push_str(&format!(",v_{i}"));
    }
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for (class, v) in rows {
        if v.len() != width {
            return Err(Error::Dimension { expected: width, actual: v.len(), context: "exported vector" });
        }
        line.clear();
        line.push_str(class);
        for x in v {
            line.push(',');
            line.push_str(&num(*x));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Termination;
    use crate::harness::{ReportRow, SampleOutcome};

    fn report() -> MetricsReport {
        MetricsReport {
            case: "case118".into(),
            config: serde_json::json!({"seed": 1}),
            rows: vec![
                ReportRow {
                    case: "case118".into(),
                    k: 75,
                    size: 0.1,
                    recall: 1.0 / 3.0,
                    bias_l2: Some(std::f64::consts::PI),
                    valid_l2: Some(1e-300),
                    n_success: 2,
                    n_total: 3,
                },
                ReportRow {
                    case: "case118".into(),
                    k: 80,
                    size: 0.1,
                    recall: 1.0,
                    bias_l2: None,
                    valid_l2: None,
                    n_success: 0,
                    n_total: 3,
                },
            ],
            samples: vec![SampleOutcome {
                set: "case75".into(),
                k: 75,
                size: 0.1,
                index: 0,
                iterations: 4,
                termination: Termination::Fooled,
                detected: false,
                bias_l2: 0.4,
                valid_l2: 2.0,
                attacker_offset: Some(3),
                eval_offset: None,
                elapsed_s: 0.01,
            }],
        }
    }

    #[test]
    fn csv_round_trips_numbers_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let r = report();
        export_report(&r, ReportFormat::Csv, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        let recs: Vec<csv::StringRecord> = reader.records().map(|x| x.unwrap()).collect();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0][3].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(recs[0][4].parse::<f64>().unwrap(), std::f64::consts::PI);
        assert_eq!(recs[0][5].parse::<f64>().unwrap(), 1e-300);
        assert_eq!(&recs[1][4], "");
    }

    #[test]
    fn json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let r = report();
        export_report(&r, ReportFormat::Json, &path).unwrap();
        let back: MetricsReport = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<serde_json::Value>(REPORT_SCHEMA).is_ok());
    }

    #[test]
    fn vectors_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        export_vectors(&path, &[("false".into(), vec![1.0, 2.0]), ("adversarial".into(), vec![0.5, 0.25])]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("class,v_0,v_1\nfalse,"));
        assert!(export_vectors(&path, &[("a".into(), vec![1.0]), ("b".into(), vec![])]).is_err());
        let missing = dir.path().join("no/such/dir/r.csv");
        match export_report(&report(), ReportFormat::Csv, &missing) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("expected an i/o error, got {other:?}"),
        }
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
