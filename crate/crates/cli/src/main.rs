use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use gridpad::defense::{input_sensitivity, load_padded, save_padded, PaddedModel};
use gridpad::harness::{
    export_report, export_vanilla, export_vectors, read_dataset_bin, read_dataset_csv, write_dataset_bin,
    write_dataset_csv, AttackTarget, Dataset, ExperimentConfig, ReportFormat, Workbench,
};
use gridpad::neural::{evaluate, load_model, save_model, MlpModel};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "gridpad", version, about = "False data injection experiments against neural detectors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Built-in profile used when no --config is given.
    #[arg(long, global = true, default_value = "paper", value_parser = ["paper", "desk"])]
    profile: String,
    /// JSON experiment config; missing fields take the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fixture name (toy3, case14, case118) or path to a case file.
    #[arg(long, global = true)]
    case: Option<String>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv")]
    format: ReportFormat,
    /// Previously generated training dataset (.csv with sidecar, or .bin).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training dataset and the attack test sets.
    GenData {
        /// Write the training set in the binary container instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Train the plain detector.
    Train,
    /// Train a detector with random input padding.
    TrainPadded {
        /// Padding width P - m; defaults to the first configured width.
        #[arg(long)]
        pad_width: Option<usize>,
    },
    /// Train a distilled detector.
    Distill {
        #[arg(long)]
        temperature: f64,
    },
    /// Train a detector on batches augmented with constrained attacks.
    AdvTrain,
    /// Run the constrained attack on every test set.
    Attack {
        /// Model file from train, train-padded, distill or adv-train; a plain
        /// model is trained when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Sweep the scaled injection `z + alpha a` over the configured alphas.
    Vanilla {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train an auxiliary classifier to separate false from adversarial data.
    DetectAdv {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write the false/adversarial vectors as CSV.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Run every experiment of the profile and write all reports to --out.
    Report,
}

/// Error carrying an explicit exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gridpad::Error>() {
            return e.exit_code() as u8;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| gridpad::Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
            let profile = value.get("profile").and_then(|p| p.as_str()).unwrap_or(&common.profile).to_string();
            let mut base = serde_json::to_value(ExperimentConfig::by_profile(&profile).map_err(|e| usage(e.to_string()))?)?;
            if let (Some(base), Some(over)) = (base.as_object_mut(), value.as_object_mut()) {
                base.append(over);
            }
            serde_json::from_value(base)
                .map_err(|e| gridpad::Error::Parse { line: 0, column: 0, message: e.to_string() })?
        }
        None => ExperimentConfig::by_profile(&common.profile).map_err(|e| usage(e.to_string()))?,
    };
    if let Some(case) = &common.case {
        cfg.case = case.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn out_path(common: &Common) -> anyhow::Result<&Path> {
    common.out.as_deref().ok_or_else(|| usage("--out is required for this command"))
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let ds = if path.extension().is_some_and(|e| e == "bin") { read_dataset_bin(path)? } else { read_dataset_csv(path)? };
    Ok(ds)
}

fn workbench(common: &Common, cfg: &ExperimentConfig) -> anyhow::Result<Workbench> {
    let start = Instant::now();
    let wb = match &common.data {
        Some(path) => Workbench::from_dataset(cfg, read_dataset(path)?)?,
        None => Workbench::build(cfg)?,
    };
    log::info!(
        "{}: {} training rows, {} held out, {} test sets ({:.1}s)",
        wb.ctx.case.name,
        wb.train.len(),
        wb.holdout.len(),
        wb.test_sets.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(wb)
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    write(path, &serde_json::to_vec_pretty(value)?)
}

enum Loaded {
    Plain(MlpModel),
    Padded(Box<PaddedModel>),
}

impl Loaded {
    fn target(&self) -> AttackTarget<'_> {
        match self {
            Loaded::Plain(m) => AttackTarget::Plain(m),
            Loaded::Padded(p) => AttackTarget::Padded(p),
        }
    }
}

fn load_any(path: &Path) -> anyhow::Result<Loaded> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| gridpad::Error::Corrupt(format!("{}: {e}", path.display())))?;
    Ok(if value.get("pad_width").is_some() { Loaded::Padded(Box::new(load_padded(&bytes)?)) } else { Loaded::Plain(load_model(&bytes)?) })
}

fn model_or_plain(wb: &Workbench, model: Option<&Path>) -> anyhow::Result<Loaded> {
    match model {
        Some(p) => load_any(p),
        None => Ok(Loaded::Plain(wb.train_plain()?.0)),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    let cfg = config(common)?;
    match &cli.command {
        Command::GenData { binary } => {
            let dir = out_path(common)?;
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let wb = workbench(common, &cfg)?;
            let full = gridpad::harness::build_train_set(&wb.ctx, &cfg)?;
            if *binary {
                write_dataset_bin(&full, &dir.join("train.bin"))?;
            } else {
                write_dataset_csv(&full, &dir.join("train.csv"))?;
            }
            for set in &wb.test_sets {
                write_dataset_csv(&set.dataset, &dir.join(format!("test_k{}.csv", set.k())))?;
            }
            write(&dir.join("config.json"), cfg.to_json().as_bytes())?;
        }
        Command::Train => {
            let wb = workbench(common, &cfg)?;
            let (model, log) = wb.train_plain()?;
            let eval = evaluate(&model, &wb.holdout_samples())?;
            log::info!("held-out accuracy {:.4}, recall {:.4}", eval.accuracy, eval.recall);
            write(out_path(common)?, &save_model(&model))?;
            println!("{}", json!({ "evaluation": eval, "final_epoch": log.epochs.last() }));
        }
        Command::TrainPadded { pad_width } => {
            let width = pad_width.or(cfg.pad_widths.first().copied()).unwrap_or(0);
            let wb = workbench(common, &cfg)?;
            let (mut model, _) = wb.train_padded(width)?;
            let eval = model.evaluate(&wb.holdout_samples())?;
            log::info!("P = {}: held-out accuracy {:.4}, recall {:.4}", wb.m() + width, eval.accuracy, eval.recall);
            write(out_path(common)?, &save_padded(&model))?;
            println!("{}", json!({ "padded_width": wb.m() + width, "evaluation": eval }));
        }
        Command::Distill { temperature } => {
            let wb = workbench(common, &cfg)?;
            let d = wb.distill(*temperature)?;
            let holdout = wb.holdout_samples();
            let eval = evaluate(&d.student, &holdout)?;
            let sensitivity = input_sensitivity(&d.student, &holdout)?;
            write(out_path(common)?, &save_model(&d.student))?;
            println!("{}", json!({ "temperature": temperature, "evaluation": eval, "input_sensitivity": sensitivity }));
        }
        Command::AdvTrain => {
            let wb = workbench(common, &cfg)?;
            let res = wb.adversarial_training(true)?;
            let eval = evaluate(&res.model, &wb.holdout_samples())?;
            write(out_path(common)?, &save_model(&res.model))?;
            println!("{}", json!({ "evaluation": eval, "stats": res.stats, "wall_clock_s": res.wall_clock_s }));
        }
        Command::Attack { model } => {
            let out = out_path(common)?;
            let wb = workbench(common, &cfg)?;
            let target = model_or_plain(&wb, model.as_deref())?;
            let report = wb.attack(target.target(), &wb.test_sets)?;
            for r in &report.rows {
                log::info!("k = {}, size {}: recall {:.3}", r.k, r.size, r.recall);
            }
            export_report(&report, common.format, out)?;
        }
        Command::Vanilla { model } => {
            let out = out_path(common)?;
            let wb = workbench(common, &cfg)?;
            let target = model_or_plain(&wb, model.as_deref())?;
            export_vanilla(&wb.vanilla(target.target())?, common.format, out)?;
        }
        Command::DetectAdv { model, vectors } => {
            let out = out_path(common)?;
            let wb = workbench(common, &cfg)?;
            let model = match model_or_plain(&wb, model.as_deref())? {
                Loaded::Plain(m) => m,
                Loaded::Padded(_) => return Err(usage("detect-adv needs a plain model")),
            };
            let (pairs, eval) = wb.adversarial_detection(&model)?;
            if let Some(path) = vectors {
                let rows: Vec<(String, Vec<f64>)> = pairs
                    .false_rows
                    .iter()
                    .map(|v| ("false".to_string(), v.clone()))
                    .chain(pairs.adversarial.iter().map(|v| ("adversarial".to_string(), v.clone())))
                    .collect();
                export_vectors(path, &rows)?;
            }
            write_json(out, &json!({ "pairs": pairs.false_rows.len(), "fooled": pairs.fooled, "evaluation": eval }))?;
        }
        Command::Report => report(common, &cfg)?,
    }
    Ok(())
}

fn ext(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    }
}

/// Every experiment of the profile. Timings go to `summary.json` only, so
/// the tabular reports are reproducible byte for byte.
fn report(common: &Common, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let dir = out_path(common)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let fmt = common.format;
    let wb = workbench(common, cfg)?;
    let holdout = wb.holdout_samples();
    let mut summary = serde_json::Map::new();

    let start = Instant::now();
    let (plain, _) = wb.train_plain()?;
    let plain_train_s = start.elapsed().as_secs_f64();
    let plain_eval = evaluate(&plain, &holdout)?;
    log::info!("plain detector: accuracy {:.4}, recall {:.4}", plain_eval.accuracy, plain_eval.recall);
    let rep = wb.attack(AttackTarget::Plain(&plain), &wb.test_sets)?;
    export_report(&rep, fmt, &dir.join(format!("attack_plain.{}", ext(fmt))))?;
    summary.insert(
        "plain".into(),
        json!({ "evaluation": plain_eval, "train_s": plain_train_s, "mean_recall": rep.mean_recall(),
                "median_attack_s": rep.median_elapsed_s() }),
    );
    export_vanilla(&wb.vanilla(AttackTarget::Plain(&plain))?, fmt, &dir.join(format!("vanilla.{}", ext(fmt))))?;

    let mut padded = Vec::new();
    for &w in &cfg.pad_widths {
        let (mut model, _) = wb.train_padded(w)?;
        let eval = model.evaluate(&holdout)?;
        let rep = wb.attack(AttackTarget::Padded(&model), &wb.test_sets)?;
        log::info!("P = {}: accuracy {:.4}, attacked recall {:.3}", wb.m() + w, eval.accuracy, rep.mean_recall());
        export_report(&rep, fmt, &dir.join(format!("attack_padded_P{}.{}", wb.m() + w, ext(fmt))))?;
        padded.push(json!({ "padded_width": wb.m() + w, "evaluation": eval, "mean_recall": rep.mean_recall() }));
    }
    summary.insert("padded".into(), padded.into());

    let mut distilled = Vec::new();
    for &t in &cfg.temperatures {
        let d = wb.distill(t)?;
        let eval = evaluate(&d.student, &holdout)?;
        let sensitivity = input_sensitivity(&d.student, &holdout)?;
        let rep = wb.attack(AttackTarget::Plain(&d.student), &wb.test_sets)?;
        log::info!("T = {t}: sensitivity {sensitivity:.3e}, attacked recall {:.3}", rep.mean_recall());
        export_report(&rep, fmt, &dir.join(format!("attack_distilled_T{t}.{}", ext(fmt))))?;
        distilled.push(json!({ "temperature": t, "evaluation": eval, "input_sensitivity": sensitivity,
                               "mean_recall": rep.mean_recall() }));
    }
    summary.insert("distilled".into(), distilled.into());

    let adv = wb.adversarial_training(true)?;
    let baseline = wb.adversarial_training(false)?;
    let eval = evaluate(&adv.model, &holdout)?;
    let rep = wb.attack(AttackTarget::Plain(&adv.model), &wb.test_sets)?;
    log::info!("adversarial training: {:.1}s vs {:.1}s, attacked recall {:.3}", adv.wall_clock_s, baseline.wall_clock_s, rep.mean_recall());
    export_report(&rep, fmt, &dir.join(format!("attack_adv_trained.{}", ext(fmt))))?;
    summary.insert(
        "adversarial_training".into(),
        json!({ "evaluation": eval, "stats": adv.stats, "wall_clock_s": adv.wall_clock_s,
                "baseline_wall_clock_s": baseline.wall_clock_s, "mean_recall": rep.mean_recall() }),
    );

    let (pairs, det) = wb.adversarial_detection(&plain)?;
    let rows: Vec<(String, Vec<f64>)> = pairs
        .false_rows
        .iter()
        .map(|v| ("false".to_string(), v.clone()))
        .chain(pairs.adversarial.iter().map(|v| ("adversarial".to_string(), v.clone())))
        .collect();
    export_vectors(&dir.join("vectors.csv"), &rows)?;
    summary.insert("adversarial_detection".into(), json!({ "pairs": pairs.false_rows.len(), "evaluation": det }));

    write(&dir.join("config.json"), cfg.to_json().as_bytes())?;
    write_json(&dir.join("summary.json"), &serde_json::Value::Object(summary))
        .map_err(|e| anyhow!("summary: {e:#}"))
}
