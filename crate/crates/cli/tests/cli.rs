use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "profile": "desk", "train_rows": 500, "calibration_count": 400, "test_per_set": 12,
    "test_k": [12, 16], "adv_train_epochs": 1, "adv_detect_per_set": 8, "temperatures": [1.0],
    "pad_widths": [2], "max_iters": 60, "vanilla_alphas": [0.5, 1.0, 2.0],
    "train": {"learning_rate": 0.01, "batch_size": 32, "epochs": 3, "rng_seed": 0, "dropout_enabled": true}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridpad")).args(args).current_dir(dir).env("RUST_LOG", "error").output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = setup();
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&run(dir.path(), &["attack", "--format", "xml", "--out", "x"])), 1);
    assert_eq!(code(&run(dir.path(), &["train", "--config", "small.json"])), 1, "missing --out");
    assert_eq!(code(&run(dir.path(), &["train", "--profile", "huge", "--out", "m.json"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = setup();
    std::fs::write(dir.path().join("broken.json"), "{\"train_rows\": ").unwrap();
    assert_eq!(code(&run(dir.path(), &["train", "--config", "broken.json", "--out", "m.json"])), 2);
    assert_eq!(code(&run(dir.path(), &["train", "--config", "small.json", "--case", "nowhere.m", "--out", "m.json"])), 2);
    std::fs::write(dir.path().join("model.json"), "{\"version\": 99}").unwrap();
    assert_eq!(code(&run(dir.path(), &["attack", "--config", "small.json", "--model", "model.json", "--out", "r.csv"])), 2);
}

#[test]
fn generated_data_feeds_training_and_attack() {
    let dir = setup();
    let d = dir.path();
    assert!(run(d, &["gen-data", "--config", "small.json", "--out", "data"]).status.success());
    for f in ["train.csv", "train.json", "test_k12.csv", "test_k16.csv", "config.json"] {
        assert!(d.join("data").join(f).exists(), "{f} missing");
    }
    let train = run(d, &["train", "--config", "small.json", "--data", "data/train.csv", "--out", "m.json"]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&train.stdout).unwrap();
    assert!(summary["evaluation"]["accuracy"].as_f64().unwrap() > 0.0);

    let attack = run(d, &["attack", "--config", "small.json", "--data", "data/train.csv", "--model", "m.json", "--out", "r.csv"]);
    assert!(attack.status.success(), "{}", String::from_utf8_lossy(&attack.stderr));
    let text = std::fs::read_to_string(d.join("r.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "case,k,size,recall,bias_l2,valid_l2,n_success,n_total");
    assert_eq!(lines.count(), 2);

    let json = run(d, &["attack", "--config", "small.json", "--model", "m.json", "--out", "r.json", "--format", "json"]);
    assert!(json.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["samples"].as_array().unwrap().len(), 24);
    assert_eq!(report["config"]["train_rows"], 500);
}

#[test]
fn binary_dataset_and_model_variants() {
    let dir = setup();
    let d = dir.path();
    assert!(run(d, &["gen-data", "--config", "small.json", "--out", "data", "--binary"]).status.success());
    assert!(d.join("data/train.bin").exists());
    let base = ["--config", "small.json", "--data", "data/train.bin"];
    let padded = run(d, &[&["train-padded", "--pad-width", "3", "--out", "p.json"], &base[..]].concat());
    assert!(padded.status.success(), "{}", String::from_utf8_lossy(&padded.stderr));
    let info: serde_json::Value = serde_json::from_slice(&padded.stdout).unwrap();
    assert_eq!(info["padded_width"], 23);
    assert!(run(d, &[&["attack", "--model", "p.json", "--out", "pr.csv"], &base[..]].concat()).status.success());
    assert!(run(d, &[&["vanilla", "--model", "p.json", "--out", "v.csv"], &base[..]].concat()).status.success());

    let distill = run(d, &[&["distill", "--temperature", "5", "--out", "s.json"], &base[..]].concat());
    assert!(distill.status.success());
    let info: serde_json::Value = serde_json::from_slice(&distill.stdout).unwrap();
    assert!(info["input_sensitivity"].as_f64().unwrap() > 0.0);

    let adv = run(d, &[&["adv-train", "--out", "a.json"], &base[..]].concat());
    assert!(adv.status.success());
    let detect = run(d, &[&["detect-adv", "--model", "a.json", "--out", "det.json", "--vectors", "vec.csv"], &base[..]].concat());
    assert!(detect.status.success(), "{}", String::from_utf8_lossy(&detect.stderr));
    let det: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("det.json")).unwrap()).unwrap();
    let auc = det["evaluation"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(std::fs::read_to_string(d.join("vec.csv")).unwrap().starts_with("class,v_0,"));
    assert_eq!(code(&run(d, &[&["detect-adv", "--model", "p.json", "--out", "x.json"], &base[..]].concat())), 1);
}

#[test]
fn seed_flag_changes_reports_and_repeats_exactly() {
    let dir = setup();
    let d = dir.path();
    for (seed, out) in [("5", "a.csv"), ("5", "b.csv"), ("6", "c.csv")] {
        assert!(run(d, &["vanilla", "--config", "small.json", "--seed", seed, "--out", out]).status.success());
    }
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn report_writes_every_table() {
    let dir = setup();
    let d = dir.path();
    let out = run(d, &["report", "--config", "small.json", "--out", "rep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "attack_plain.csv",
        "vanilla.csv",
        "attack_padded_P22.csv",
        "attack_distilled_T1.csv",
        "attack_adv_trained.csv",
        "vectors.csv",
        "summary.json",
        "config.json",
    ] {
        assert!(d.join("rep").join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("rep/summary.json")).unwrap()).unwrap();
    assert!(summary["adversarial_training"]["wall_clock_s"].as_f64().unwrap() > 0.0);
}
