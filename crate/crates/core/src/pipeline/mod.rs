//! File-level orchestration: dataset generation, manifests, training and
//! evaluation over generated datasets, and benchmark reports.

mod benchmark;
mod evaluate;
mod generate;
mod manifest;

pub use benchmark::{run_benchmark, BenchmarkOutcome};
pub use evaluate::{
    attack_manifest, chunk_ranges, load_labeled, predict_manifest, train_from_manifest, AdaptMode, AttackEntry,
    AttackSummary, EvalOptions, TrainedModel,
};
pub use generate::{apply_single, prepare_shape, run_generate, GenerateOutcome, PreparedShape, RunConfig};
pub use manifest::{sha256_hex, CorruptedEntry, DatasetManifest, FailureRecord, FileRef, SampleEntry, SourceKind, MANIFEST_FILE};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corruption::{CorruptionError, CorruptionKind};
use crate::geometry::GeometryError;
use crate::io::{FormatError, LoadError};
use crate::metrics::MetricsError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{} need source meshes but {file} is a point cloud", kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(" and "))]
    MeshRequired { kinds: Vec<CorruptionKind>, file: String },
    #[error("no input shapes found under {0}")]
    NoInputs(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl PipelineError {
    /// Process exit code: 1 for configuration mistakes, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(io_err(path))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// `path` joined under `root` when relative.
pub(crate) fn resolve(root: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}
