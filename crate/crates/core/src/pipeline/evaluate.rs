use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, FileRef};
use super::{read_file, resolve, write_file, PipelineError};
use crate::augment::LabeledCloud;
use crate::corruption::CorruptionKind;
use crate::geometry::PointCloud;
use crate::io::{read_ply, write_ply, PlyEncoding};
use crate::metrics::PredictionRecord;
use crate::nn::{
    argmax, bn_adapt, pgd_attack, tent_adapt, train, Architecture, NetworkState, NnError, PgdConfig, TentConfig,
    TrainConfig, TrainOutcome,
};
use crate::rng::{mix_keys, string_key};

/// Test-time adaptation applied per evaluation batch, always starting from the source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AdaptMode {
    None,
    Bn { blend: f64 },
    Tent(TentConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub adapt: AdaptMode,
    pub batch_size: usize,
    pub include_clean: bool,
    pub kinds: Option<Vec<CorruptionKind>>,
    pub keep_logits: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            adapt: AdaptMode::None,
            batch_size: 32,
            include_clean: true,
            kinds: None,
            keep_logits: false,
        }
    }
}

/// Splits `0..n` into chunks of `size`, folding a trailing singleton into the previous chunk.
pub fn chunk_ranges(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(1);
    let mut out: Vec<std::ops::Range<usize>> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").end = last.end;
    }
    out
}

fn load_cloud(root: &Path, file: &FileRef) -> Result<PointCloud, PipelineError> {
    Ok(read_ply(&read_file(&resolve(root, &file.path))?)?)
}

/// Clean clouds of a manifest with one-hot labels over `class_names`.
pub fn load_labeled(
    manifest: &DatasetManifest,
    root: &Path,
    class_names: &[String],
) -> Result<Vec<(String, LabeledCloud)>, PipelineError> {
    manifest
        .samples
        .par_iter()
        .map(|s| {
            let class = class_names.iter().position(|c| *c == s.class_name).ok_or_else(|| {
                PipelineError::Manifest(format!("{}: class {:?} unknown to the model", s.sample_id, s.class_name))
            })?;
            let cloud = load_cloud(root, &s.clean)?;
            let labeled = LabeledCloud::one_hot(cloud, class, class_names.len()).map_err(NnError::from)?;
            Ok((s.sample_id.clone(), labeled))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub outcome: TrainOutcome,
    pub class_names: Vec<String>,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

/// Trains on the clean clouds of a manifest. A `validation_fraction` share
/// of samples, chosen by hashing the sample id with the seed, is held out.
pub fn train_from_manifest(
    manifest_path: &Path,
    config: &TrainConfig,
    validation_fraction: f64,
) -> Result<TrainedModel, PipelineError> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(PipelineError::Config(format!(
            "validation fraction {validation_fraction} outside [0, 1)"
        )));
    }
    let (manifest, root) = DatasetManifest::load(manifest_path)?;
    let class_names = manifest.class_names.clone();
    let data = load_labeled(&manifest, &root, &class_names)?;
    let mut train_set = Vec::new();
    let mut validation = Vec::new();
    let mut train_ids = Vec::new();
    let mut validation_ids = Vec::new();
    for (id, d) in data {
        let u = (mix_keys(&[config.seed, string_key(&id)]) >> 11) as f64 / (1u64 << 53) as f64;
        if u < validation_fraction {
            validation.push(d);
            validation_ids.push(id);
        } else {
            train_set.push(d);
            train_ids.push(id);
        }
    }
    let state = NetworkState::new(Architecture::new(class_names.len()), config.seed)?;
    let outcome = train(&state, &train_set, &validation, config)?;
    Ok(TrainedModel {
        outcome,
        class_names,
        train_ids,
        validation_ids,
    })
}

fn adapted(state: &NetworkState, batch: &[&[nalgebra::Point3<f64>]], mode: AdaptMode) -> Result<NetworkState, NnError> {
    match mode {
        AdaptMode::None => Ok(state.clone()),
        AdaptMode::Bn { blend } => bn_adapt(state, batch, blend),
        AdaptMode::Tent(cfg) => tent_adapt(state, batch, &cfg),
    }
}

/// Predicts the clean set and every generated cell of a manifest.
///
/// Each cell is split into batches of `batch_size`; with adaptation, every
/// batch is adapted from the source model before it is predicted.
pub fn predict_manifest(
    state: &NetworkState,
    class_names: &[String],
    manifest: &DatasetManifest,
    root: &Path,
    options: &EvalOptions,
) -> Result<Vec<PredictionRecord>, PipelineError> {
    if class_names.len() != state.classes() {
        return Err(PipelineError::Config(format!(
            "{} class names for a {}-class model",
            class_names.len(),
            state.classes()
        )));
    }
    let label = |name: &str, id: &str| {
        class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| PipelineError::Manifest(format!("{id}: class {name:?} unknown to the model")))
    };
    let mut groups: Vec<(Option<CorruptionKind>, u8, Vec<(String, usize, FileRef)>)> = Vec::new();
    if options.include_clean {
        let items = manifest
            .samples
            .iter()
            .map(|s| Ok((s.sample_id.clone(), label(&s.class_name, &s.sample_id)?, s.clean.clone())))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        groups.push((None, 0, items));
    }
    for &k in &manifest.kinds {
        if options.kinds.as_ref().is_some_and(|ks| !ks.contains(&k)) {
            continue;
        }
        for &s in &manifest.severities {
            let mut items = Vec::new();
            for sample in &manifest.samples {
                if let Some(c) = sample.cell(k, s) {
                    items.push((sample.sample_id.clone(), label(&sample.class_name, &sample.sample_id)?, c.cloud.clone()));
                }
            }
            if !items.is_empty() {
                groups.push((Some(k), s, items));
            }
        }
    }
    let mut records = Vec::new();
    for (kind, severity, items) in groups {
        let clouds = items
            .par_iter()
            .map(|(_, _, f)| load_cloud(root, f))
            .collect::<Result<Vec<_>, _>>()?;
        for range in chunk_ranges(items.len(), options.batch_size) {
            let batch: Vec<&[nalgebra::Point3<f64>]> = clouds[range.clone()].iter().map(|c| c.points()).collect();
            let model = if batch.len() >= 2 {
                adapted(state, &batch, options.adapt)?
            } else {
                state.clone()
            };
            let logits = model.logits(&batch, 16)?;
            for (row, (id, truth, _)) in items[range].iter().enumerate() {
                let values: Vec<f64> = logits.row(row).iter().copied().collect();
                records.push(PredictionRecord {
                    sample_id: id.clone(),
                    corruption: kind,
                    severity,
                    true_label: *truth,
                    pred_label: argmax(values.iter().copied()),
                    logits: options.keep_logits.then_some(values),
                });
            }
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub sample_id: String,
    pub true_label: usize,
    pub clean_pred: usize,
    pub adversarial_pred: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub linf: f64,
    pub cloud: Option<FileRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub config: PgdConfig,
    pub seed: u64,
    pub samples: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    pub entries: Vec<AttackEntry>,
}

/// Runs PGD on every clean cloud of a manifest; adversarial clouds go to `out` when given.
pub fn attack_manifest(
    state: &NetworkState,
    class_names: &[String],
    manifest: &DatasetManifest,
    root: &Path,
    config: &PgdConfig,
    seed: u64,
    out: Option<&PathBuf>,
) -> Result<AttackSummary, PipelineError> {
    config.validate()?;
    let data = load_labeled(manifest, root, class_names)?;
    let entries = data
        .par_iter()
        .map(|(id, d)| {
            let truth = d.argmax();
            let outcome = pgd_attack(state, &d.cloud, truth, config, mix_keys(&[seed, string_key(id)]))?;
            let preds = state.predict(&[d.cloud.points(), outcome.adversarial.points()])?;
            let linf = d
                .cloud
                .points()
                .iter()
                .zip(outcome.adversarial.points())
                .map(|(a, b)| (a - b).abs().max())
                .fold(0.0, f64::max);
            let cloud = match out {
                Some(dir) => {
                    let rel = format!("adversarial/{id}.ply");
                    let bytes = write_ply(&outcome.adversarial, PlyEncoding::BinaryLittleEndian);
                    write_file(&dir.join(&rel), &bytes)?;
                    Some(FileRef::new(rel, &bytes))
                }
                None => None,
            };
            Ok(AttackEntry {
                sample_id: id.clone(),
                true_label: truth,
                clean_pred: preds[0],
                adversarial_pred: preds[1],
                initial_loss: outcome.initial_loss,
                final_loss: outcome.final_loss,
                linf,
                cloud,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let n = entries.len().max(1) as f64;
    Ok(AttackSummary {
        config: *config,
        seed,
        samples: entries.len(),
        clean_accuracy: entries.iter().filter(|e| e.clean_pred == e.true_label).count() as f64 / n,
        adversarial_accuracy: entries.iter().filter(|e| e.adversarial_pred == e.true_label).count() as f64 / n,
        entries,
    })
}
