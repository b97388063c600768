use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_file, read_json, resolve, PipelineError};
use crate::corruption::CorruptionKind;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A written file, relative to the dataset root, with the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl FileRef {
    pub fn new(path: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: sha256_hex(bytes),
        }
    }

    pub fn verify(&self, root: &Path) -> Result<(), PipelineError> {
        let bytes = read_file(&resolve(root, &self.path))?;
        let actual = sha256_hex(&bytes);
        if actual != self.sha256 {
            return Err(PipelineError::Manifest(format!(
                "{}: digest {actual} does not match recorded {}",
                self.path, self.sha256
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Mesh,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedEntry {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub points: usize,
    pub cloud: FileRef,
    pub provenance: FileRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: String,
    pub class_name: String,
    /// Input path relative to the input directory.
    pub source: String,
    pub source_kind: SourceKind,
    pub clean_points: usize,
    pub clean: FileRef,
    pub corrupted: Vec<CorruptedEntry>,
}

impl SampleEntry {
    pub fn cell(&self, kind: CorruptionKind, severity: u8) -> Option<&CorruptedEntry> {
        self.corrupted.iter().find(|c| c.kind == kind && c.severity == severity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_id: String,
    pub kind: Option<CorruptionKind>,
    pub severity: Option<u8>,
    pub error: String,
}

/// Index of a generated dataset. All paths are relative to the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub dataset_root: String,
    pub seed: u64,
    pub points: usize,
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
    pub table: FileRef,
    pub table_digest: String,
    pub class_names: Vec<String>,
    pub samples: Vec<SampleEntry>,
    pub failures: Vec<FailureRecord>,
}

impl DatasetManifest {
    /// Reads `path`, or `path/manifest.json` when `path` is a directory. Returns the dataset root too.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), PipelineError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let manifest: Self = read_json(&file)?;
        if manifest.manifest_version != MANIFEST_VERSION {
            return Err(PipelineError::Manifest(format!(
                "unsupported manifest version {}",
                manifest.manifest_version
            )));
        }
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let root = resolve(&dir, &manifest.dataset_root);
        Ok((manifest, root))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn sample(&self, id: &str) -> Option<&SampleEntry> {
        self.samples
            .binary_search_by(|s| s.sample_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileRef> {
        std::iter::once(&self.table).chain(self.samples.iter().flat_map(|s| {
            std::iter::once(&s.clean).chain(s.corrupted.iter().flat_map(|c| [&c.cloud, &c.provenance]))
        }))
    }

    /// Checks that every referenced file exists with its recorded digest.
    pub fn verify(&self, root: &Path) -> Result<usize, PipelineError> {
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(&s.sample_id) {
                return Err(PipelineError::Manifest(format!("duplicate sample {}", s.sample_id)));
            }
        }
        let mut n = 0;
        for f in self.files() {
            f.verify(root)?;
            n += 1;
        }
        Ok(n)
    }
}
