use std::path::{Path, PathBuf};

use pccorrupt::corruption::{CorruptionKind, CorruptionSpec, SeverityTable};
use pccorrupt::io::{load_shape, read_raw, write_off, write_ply, write_raw, PlyEncoding, Shape};
use pccorrupt::metrics::{write_predictions, ReportFormat};
use pccorrupt::nn::{load_checkpoint, save_checkpoint, PgdConfig, TentConfig, TrainConfig};
use pccorrupt::pipeline::{
    apply_single, attack_manifest, predict_manifest, prepare_shape, run_benchmark, run_generate, train_from_manifest,
    sha256_hex, AdaptMode, DatasetManifest, EvalOptions, PipelineError, RunConfig,
};
use pccorrupt::rng::string_key;
use pccorrupt::synthetic::write_mesh_dataset;
use serde_json::json;

use crate::args::*;
use crate::log;

pub const SEED_ENV: &str = "PC_CORRUPT_SEED";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    std::fs::write(path, bytes).map_err(io(path))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// `--seed`, else `fallback` (from a config file), else `PC_CORRUPT_SEED`, else 0.
fn resolve_seed(flag: Option<u64>, fallback: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(fallback) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn parse_kinds(s: &str) -> Result<Vec<CorruptionKind>, CliError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(CorruptionKind::ALL.to_vec());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<CorruptionKind>().map_err(|e| CliError::usage(e.to_string())))
        .collect()
}

fn parse_severities(s: &str) -> Result<Vec<u8>, CliError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(vec![1, 2, 3, 4, 5]);
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u8>().map_err(|_| CliError::usage(format!("invalid severity {t:?}"))))
        .collect()
}

fn load_table(path: Option<&PathBuf>) -> Result<SeverityTable, CliError> {
    match path {
        None => Ok(SeverityTable::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io(p))?;
            SeverityTable::from_json(&text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
        }
    }
}

pub fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Apply(a) => apply(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Attack(a) => attack(a),
        Command::Bench(a) => bench(a),
        Command::Export(a) => export(a),
        Command::Synth(a) => synth(a),
    }
}

fn gen(a: GenArgs) -> Result<u8, CliError> {
    let file: Option<RunConfig> = a.config.as_deref().map(read_config).transpose()?;
    let file_seed = file.as_ref().map(|c| c.seed);
    let mut cfg = file.unwrap_or_default();
    if let Some(v) = a.input {
        cfg.input = v;
    }
    if let Some(v) = a.output {
        cfg.output = v;
    }
    if let Some(v) = a.kinds {
        cfg.kinds = parse_kinds(&v)?;
    }
    if let Some(v) = a.severities {
        cfg.severities = parse_severities(&v)?;
    }
    if let Some(v) = a.points {
        cfg.points = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if a.table.is_some() {
        cfg.table = a.table;
    }
    cfg.ascii |= a.ascii;
    cfg.seed = resolve_seed(a.seed, file_seed)?;
    if cfg.input.as_os_str().is_empty() || cfg.output.as_os_str().is_empty() {
        return Err(CliError::usage("gen needs --input and --output (or a config providing them)"));
    }
    log::info("gen_start", json!({ "input": cfg.input, "output": cfg.output, "seed": cfg.seed }));
    let outcome = run_generate(&cfg)?;
    for f in &outcome.manifest.failures {
        log::warn(
            "sample_failed",
            json!({ "sample_id": f.sample_id, "kind": f.kind, "severity": f.severity, "error": f.error }),
        );
    }
    log::info(
        "gen_done",
        json!({ "written": outcome.written, "failed": outcome.failed, "manifest": outcome.manifest_path }),
    );
    println!(
        "generated {} clouds for {} samples ({} failed); manifest {}",
        outcome.written,
        outcome.manifest.samples.len(),
        outcome.failed,
        outcome.manifest_path.display()
    );
    Ok(if outcome.is_partial() { 3 } else { 0 })
}

fn apply(a: ApplyArgs) -> Result<u8, CliError> {
    let kind: CorruptionKind = a.kind.parse().map_err(|e: pccorrupt::corruption::CorruptionError| CliError::usage(e.to_string()))?;
    let spec = CorruptionSpec::new(kind, a.severity, resolve_seed(a.seed, None)?)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let table = load_table(a.table.as_ref())?;
    let (_, out) = apply_single(&a.input, &spec, &table, a.points)?;
    let enc = if a.ascii { PlyEncoding::Ascii } else { PlyEncoding::BinaryLittleEndian };
    write(&a.output, &write_ply(&out.cloud, enc))?;
    let prov_path = a.output.with_extension("json");
    let prov = serde_json::to_string_pretty(&out.provenance).expect("provenance serializes");
    write(&prov_path, prov.as_bytes())?;
    log::info("apply_done", json!({ "kind": kind, "severity": a.severity, "points": out.cloud.len() }));
    println!(
        "{} severity {}: {} -> {} points, wrote {}",
        kind,
        a.severity,
        out.provenance.input_points,
        out.cloud.len(),
        a.output.display()
    );
    Ok(0)
}

fn train(a: TrainArgs) -> Result<u8, CliError> {
    let file: Option<TrainConfig> = a.config.as_deref().map(read_config).transpose()?;
    let file_seed = file.as_ref().map(|c| c.seed);
    let mut cfg = file.unwrap_or_default();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.smoothing {
        cfg.smoothing = v;
    }
    if let Some(v) = a.augmentation {
        cfg.augmentation = v.parse().map_err(CliError::usage)?;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if a.points.is_some() {
        cfg.points = a.points;
    }
    cfg.seed = resolve_seed(a.seed, file_seed)?;
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    log::info("train_start", json!({ "manifest": a.manifest, "config": cfg }));
    let model = train_from_manifest(&a.manifest, &cfg, a.val_fraction)?;
    for e in &model.outcome.history {
        log::info("epoch", serde_json::to_value(e).expect("record serializes"));
    }
    let cfg_json = serde_json::to_vec(&cfg).expect("config serializes");
    let bytes = save_checkpoint(&model.outcome.state, &model.class_names, Some(sha256_hex(&cfg_json)))
        .map_err(|e| CliError::data(e.to_string()))?;
    write(&a.output, &bytes)?;
    let history_path = a.output.with_extension("history.json");
    let history = json!({
        "config": cfg,
        "best_epoch": model.outcome.best_epoch,
        "train_samples": model.train_ids.len(),
        "validation_samples": model.validation_ids.len(),
        "history": model.outcome.history,
    });
    write(&history_path, serde_json::to_string_pretty(&history).expect("json").as_bytes())?;
    let last = model.outcome.history.last();
    println!(
        "trained {} epochs on {} samples (best epoch {}); final train accuracy {:.3}; checkpoint {}",
        model.outcome.history.len(),
        model.train_ids.len(),
        model.outcome.best_epoch,
        last.map_or(f64::NAN, |r| r.train_accuracy),
        a.output.display()
    );
    Ok(0)
}

fn load_model(path: &Path) -> Result<(pccorrupt::NetworkState, Vec<String>), CliError> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    let (state, meta) = load_checkpoint(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok((state, meta.class_names))
}

fn eval(a: EvalArgs) -> Result<u8, CliError> {
    let (state, classes) = load_model(&a.checkpoint)?;
    let (manifest, root) = DatasetManifest::load(&a.manifest)?;
    let adapt = match a.adapt {
        AdaptArg::None => AdaptMode::None,
        AdaptArg::Bn => AdaptMode::Bn { blend: a.blend },
        AdaptArg::Tent => AdaptMode::Tent(TentConfig {
            lr: a.tent_lr,
            steps: a.tent_steps,
        }),
    };
    if a.batch_size < 2 && adapt != AdaptMode::None {
        return Err(CliError::usage("adaptation needs --batch-size of at least 2"));
    }
    let options = EvalOptions {
        adapt,
        batch_size: a.batch_size,
        include_clean: !a.no_clean,
        kinds: a.kinds.as_deref().map(parse_kinds).transpose()?,
        keep_logits: a.logits,
    };
    let records = predict_manifest(&state, &classes, &manifest, &root, &options)?;
    write(&a.output, write_predictions(&records).as_bytes())?;
    let wrong = records.iter().filter(|r| r.is_wrong()).count();
    log::info("eval_done", json!({ "records": records.len(), "wrong": wrong, "adapt": adapt }));
    println!(
        "{} predictions ({} wrong) written to {}",
        records.len(),
        wrong,
        a.output.display()
    );
    Ok(0)
}

fn attack(a: AttackArgs) -> Result<u8, CliError> {
    let (state, classes) = load_model(&a.checkpoint)?;
    let (manifest, root) = DatasetManifest::load(&a.manifest)?;
    let config = PgdConfig {
        epsilon: a.epsilon,
        alpha: a.alpha,
        steps: a.steps,
        random_init: !a.no_random_init,
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let seed = resolve_seed(a.seed, None)?;
    let out = (!a.no_clouds).then(|| a.output.clone());
    let summary = attack_manifest(&state, &classes, &manifest, &root, &config, seed, out.as_ref())?;
    let path = a.output.join("attack_summary.json");
    write(&path, serde_json::to_string_pretty(&summary).expect("json").as_bytes())?;
    log::info(
        "attack_done",
        json!({ "samples": summary.samples, "clean_accuracy": summary.clean_accuracy, "adversarial_accuracy": summary.adversarial_accuracy }),
    );
    println!(
        "PGD on {} samples: accuracy {:.1}% clean, {:.1}% adversarial; summary {}",
        summary.samples,
        100.0 * summary.clean_accuracy,
        100.0 * summary.adversarial_accuracy,
        path.display()
    );
    Ok(0)
}

fn bench(a: BenchArgs) -> Result<u8, CliError> {
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    let outcome = run_benchmark(&a.predictions, &a.manifest, a.report.as_deref(), format)?;
    if !outcome.missing_cells.is_empty() || outcome.clean_missing {
        let cells: Vec<String> = outcome.missing_cells.iter().map(|(k, s)| format!("{k}/{s}")).collect();
        log::warn("coverage", json!({ "missing_cells": cells, "clean_missing": outcome.clean_missing }));
    }
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |r| format!("{:.1}%", 100.0 * r));
    log::info("bench_done", json!({ "records": outcome.records, "er_clean": outcome.report.er_clean, "er_cor": outcome.report.er_cor }));
    println!(
        "{} records: ER_clean {}, ER_cor {}, mER_cor {} ({} of {} corruptions present)",
        outcome.records,
        pct(outcome.report.er_clean),
        pct(outcome.report.er_cor),
        pct(outcome.report.mer_cor),
        outcome.report.kinds_present,
        outcome.report.kinds.len()
    );
    if a.report.is_none() {
        println!("{}", pccorrupt::metrics::render_report(&outcome.report, format));
    }
    Ok(0)
}

fn extension(p: &Path) -> String {
    p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default()
}

fn export(a: ExportArgs) -> Result<u8, CliError> {
    let shape = if matches!(extension(&a.input).as_str(), "bin" | "raw") {
        let bytes = std::fs::read(&a.input).map_err(io(&a.input))?;
        Shape::Cloud(read_raw(&bytes).map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?)
    } else {
        load_shape(&a.input).map_err(|e| CliError::data(e.to_string()))?
    };
    let out_ext = extension(&a.output);
    let bytes = match (&shape, out_ext.as_str()) {
        (Shape::Mesh(m), "off") => write_off(m).into_bytes(),
        (Shape::Cloud(_), "off") => return Err(CliError::usage("a point cloud cannot be written as OFF")),
        (_, "ply" | "bin" | "raw") => {
            let cloud = match shape {
                Shape::Cloud(c) => c,
                Shape::Mesh(m) => {
                    let seed = resolve_seed(a.seed, None)?;
                    let key = string_key(&a.input.display().to_string());
                    prepare_shape(Shape::Mesh(m), a.points, seed, key)?.cloud
                }
            };
            if out_ext == "ply" {
                let enc = match a.encoding {
                    EncodingArg::Ascii => PlyEncoding::Ascii,
                    EncodingArg::Binary => PlyEncoding::BinaryLittleEndian,
                };
                write_ply(&cloud, enc)
            } else {
                write_raw(&cloud)
            }
        }
        _ => return Err(CliError::usage(format!("unsupported output extension {out_ext:?}"))),
    };
    write(&a.output, &bytes)?;
    println!("wrote {}", a.output.display());
    Ok(0)
}

fn synth(a: SynthArgs) -> Result<u8, CliError> {
    let seed = resolve_seed(a.seed, None)?;
    let paths = write_mesh_dataset(&a.output, a.per_class, seed).map_err(io(&a.output))?;
    log::info("synth_done", json!({ "meshes": paths.len(), "seed": seed }));
    println!("wrote {} meshes under {}", paths.len(), a.output.display());
    Ok(0)
}
