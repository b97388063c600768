use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{
    CorruptedEntry, DatasetManifest, FailureRecord, FileRef, SampleEntry, SourceKind, MANIFEST_FILE, MANIFEST_VERSION,
};
use super::{io_err, read_file, write_file, PipelineError};
use crate::corruption::{apply_corruption, Corrupted, CorruptionInput, CorruptionKind, CorruptionSpec, SeverityTable};
use crate::geometry::{PointCloud, TriangleMesh};
use crate::io::{is_supported, load_shape, write_ply, PlyEncoding, Shape};
use crate::rng::{keyed_rng, mix_keys, string_key};

pub const TABLE_FILE: &str = "severity_table.json";

fn all_kinds() -> Vec<CorruptionKind> {
    CorruptionKind::ALL.to_vec()
}

fn all_severities() -> Vec<u8> {
    vec![1, 2, 3, 4, 5]
}

fn default_points() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub input: PathBuf,
    #[serde(default)]
    pub output: PathBuf,
    #[serde(default = "all_kinds")]
    pub kinds: Vec<CorruptionKind>,
    #[serde(default = "all_severities")]
    pub severities: Vec<u8>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Severity table override (JSON).
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub ascii: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output: PathBuf::new(),
            kinds: all_kinds(),
            severities: all_severities(),
            points: default_points(),
            seed: 0,
            workers: 0,
            table: None,
            ascii: false,
        }
    }
}

impl RunConfig {
    /// Validates and puts the selections in canonical order.
    pub fn normalized(&self) -> Result<Self, PipelineError> {
        let mut c = self.clone();
        c.kinds.sort_by_key(|k| k.ordinal());
        c.kinds.dedup();
        c.severities.sort_unstable();
        c.severities.dedup();
        if c.kinds.is_empty() {
            return Err(PipelineError::Config("no corruption kinds selected".into()));
        }
        if c.severities.is_empty() {
            return Err(PipelineError::Config("no severities selected".into()));
        }
        if let Some(s) = c.severities.iter().find(|s| !(1..=5).contains(*s)) {
            return Err(PipelineError::Config(format!("severity {s} outside 1..=5")));
        }
        if c.points < 64 {
            return Err(PipelineError::Config(format!("point budget {} below 64", c.points)));
        }
        Ok(c)
    }

    pub fn load_table(&self) -> Result<SeverityTable, PipelineError> {
        match &self.table {
            None => Ok(SeverityTable::default()),
            Some(p) => {
                let bytes = read_file(p)?;
                Ok(SeverityTable::from_json(&String::from_utf8_lossy(&bytes))?)
            }
        }
    }

    fn encoding(&self) -> PlyEncoding {
        if self.ascii {
            PlyEncoding::Ascii
        } else {
            PlyEncoding::BinaryLittleEndian
        }
    }
}

/// A normalized input sample, with its mesh in the same frame when available.
#[derive(Debug, Clone)]
pub struct PreparedShape {
    pub cloud: PointCloud,
    pub mesh: Option<TriangleMesh>,
}

/// Samples meshes to `points`, subsamples larger clouds to `points`, and
/// normalizes to the unit sphere. `key` selects the random stream.
pub fn prepare_shape(shape: Shape, points: usize, seed: u64, key: u64) -> Result<PreparedShape, PipelineError> {
    match shape {
        Shape::Mesh(mesh) => {
            let sampled = mesh.sample_surface(points, mix_keys(&[seed, key, 0]))?;
            let (center, radius) = sampled.unit_sphere_transform()?;
            Ok(PreparedShape {
                cloud: sampled.map(|p| nalgebra::Point3::from((p - center) / radius)),
                mesh: Some(mesh.normalized_with(&center, radius)),
            })
        }
        Shape::Cloud(cloud) => {
            let cloud = if cloud.len() > points {
                let mut rng = keyed_rng(&[seed, key, 1]);
                let mut idx = sample(&mut rng, cloud.len(), points).into_vec();
                idx.sort_unstable();
                PointCloud::new(idx.iter().map(|&i| cloud.points()[i]).collect())?
            } else {
                cloud
            };
            Ok(PreparedShape {
                cloud: cloud.normalize_unit_sphere()?,
                mesh: None,
            })
        }
    }
}

/// Loads one file, prepares it, and applies one corruption.
pub fn apply_single(
    path: &Path,
    spec: &CorruptionSpec,
    table: &SeverityTable,
    points: usize,
) -> Result<(PreparedShape, Corrupted), PipelineError> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let key = string_key(&name);
    let prepared = prepare_shape(load_shape(path)?, points, spec.seed, key)?;
    let input = CorruptionInput {
        cloud: &prepared.cloud,
        mesh: prepared.mesh.as_ref(),
    };
    let out = apply_corruption(input, spec, table, key)?;
    Ok((prepared, out))
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub written: usize,
    pub failed: usize,
}

impl GenerateOutcome {
    pub fn is_partial(&self) -> bool {
        self.failed > 0
    }
}

struct InputFile {
    path: PathBuf,
    relative: String,
    id: String,
    class_name: String,
}

fn discover(root: &Path) -> Result<Vec<InputFile>, PipelineError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if is_supported(&path) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(root, &mut paths)?;
    let mut files: Vec<InputFile> = paths
        .into_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).expect("walked under root").to_path_buf();
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            let stem = rel.with_extension("");
            let id = stem
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            let class_name = if parts.len() > 1 { parts[0].clone() } else { "unlabeled".to_string() };
            InputFile {
                relative: parts.join("/"),
                path,
                id,
                class_name,
            }
        })
        .collect();
    files.sort_by(|a, b| a.id.cmp(&b.id).then(a.relative.cmp(&b.relative)));
    if let Some(w) = files.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(PipelineError::Config(format!(
            "{} and {} map to the same sample id",
            w[0].relative, w[1].relative
        )));
    }
    Ok(files)
}

struct Prepared {
    file: InputFile,
    kind: SourceKind,
    shape: PreparedShape,
    clean: FileRef,
    key: u64,
}

fn source_kind(path: &Path) -> SourceKind {
    match path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).as_deref() {
        Some("off") => SourceKind::Mesh,
        _ => SourceKind::Cloud,
    }
}

/// Generates every selected `(kind, severity)` cloud for every input shape.
///
/// Input files are found recursively; the first directory below `input`
/// names the class. Output paths are `clean/<id>.ply` and
/// `<kind>/<severity>/<id>.{ply,json}`. The manifest is written last and
/// any stale manifest is removed first, so a missing manifest marks an
/// incomplete run. Per-sample failures are recorded and the run continues.
pub fn run_generate(config: &RunConfig) -> Result<GenerateOutcome, PipelineError> {
    let config = config.normalized()?;
    let table = config.load_table()?;
    let files = discover(&config.input)?;
    if files.is_empty() {
        return Err(PipelineError::NoInputs(config.input.display().to_string()));
    }
    let mesh_kinds: Vec<CorruptionKind> = config.kinds.iter().copied().filter(|k| k.needs_mesh()).collect();
    if !mesh_kinds.is_empty() {
        if let Some(f) = files.iter().find(|f| source_kind(&f.path) == SourceKind::Cloud) {
            return Err(PipelineError::MeshRequired {
                kinds: mesh_kinds,
                file: f.relative.clone(),
            });
        }
    }
    let out = &config.output;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }
    let table_json = table.to_json();
    write_file(&out.join(TABLE_FILE), table_json.as_bytes())?;
    let table_ref = FileRef::new(TABLE_FILE, table_json.as_bytes());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let encoding = config.encoding();

    let (prepared, failures, entries) = pool.install(|| {
        let results: Vec<Result<Prepared, (String, String)>> = files
            .into_par_iter()
            .map(|file| {
                let key = string_key(&file.id);
                let kind = source_kind(&file.path);
                let attempt = || -> Result<(PreparedShape, FileRef), PipelineError> {
                    let shape = prepare_shape(load_shape(&file.path)?, config.points, config.seed, key)?;
                    let rel = format!("clean/{}.ply", file.id);
                    let bytes = write_ply(&shape.cloud, encoding);
                    write_file(&out.join(&rel), &bytes)?;
                    Ok((shape, FileRef::new(rel, &bytes)))
                };
                match attempt() {
                    Ok((shape, clean)) => Ok(Prepared {
                        file,
                        kind,
                        shape,
                        clean,
                        key,
                    }),
                    Err(e) => Err((file.id, e.to_string())),
                }
            })
            .collect();
        let mut prepared = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(p) => prepared.push(p),
                Err((id, error)) => failures.push(FailureRecord {
                    sample_id: id,
                    kind: None,
                    severity: None,
                    error,
                }),
            }
        }
        let mut tasks: Vec<(usize, CorruptionKind, u8)> = Vec::new();
        for i in 0..prepared.len() {
            for &k in &config.kinds {
                for &s in &config.severities {
                    tasks.push((i, k, s));
                }
            }
        }
        let entries: Vec<(usize, Result<CorruptedEntry, FailureRecord>)> = tasks
            .par_iter()
            .map(|&(i, kind, severity)| {
                let p = &prepared[i];
                let attempt = || -> Result<CorruptedEntry, PipelineError> {
                    let spec = CorruptionSpec::new(kind, severity, config.seed)?;
                    let input = CorruptionInput {
                        cloud: &p.shape.cloud,
                        mesh: p.shape.mesh.as_ref(),
                    };
                    let result = apply_corruption(input, &spec, &table, p.key)?;
                    let base = format!("{}/{}/{}", kind.name(), severity, p.file.id);
                    let cloud_bytes = write_ply(&result.cloud, encoding);
                    let mut prov = serde_json::to_string_pretty(&result.provenance).expect("provenance serializes");
                    prov.push('\n');
                    write_file(&out.join(format!("{base}.ply")), &cloud_bytes)?;
                    write_file(&out.join(format!("{base}.json")), prov.as_bytes())?;
                    Ok(CorruptedEntry {
                        kind,
                        severity,
                        points: result.cloud.len(),
                        cloud: FileRef::new(format!("{base}.ply"), &cloud_bytes),
                        provenance: FileRef::new(format!("{base}.json"), prov.as_bytes()),
                    })
                };
                let r = attempt().map_err(|e| FailureRecord {
                    sample_id: p.file.id.clone(),
                    kind: Some(kind),
                    severity: Some(severity),
                    error: e.to_string(),
                });
                (i, r)
            })
            .collect();
        (prepared, failures, entries)
    });

    let mut failures = failures;
    let mut samples: Vec<SampleEntry> = prepared
        .iter()
        .map(|p| SampleEntry {
            sample_id: p.file.id.clone(),
            class_name: p.file.class_name.clone(),
            source: p.file.relative.clone(),
            source_kind: p.kind,
            clean_points: p.shape.cloud.len(),
            clean: p.clean.clone(),
            corrupted: Vec::new(),
        })
        .collect();
    let mut written = samples.len();
    for (i, r) in entries {
        match r {
            Ok(e) => {
                samples[i].corrupted.push(e);
                written += 1;
            }
            Err(f) => failures.push(f),
        }
    }
    failures.sort_by(|a, b| {
        (&a.sample_id, a.kind.map(|k| k.ordinal()), a.severity).cmp(&(&b.sample_id, b.kind.map(|k| k.ordinal()), b.severity))
    });
    let mut class_names: Vec<String> = samples.iter().map(|s| s.class_name.clone()).collect();
    class_names.sort();
    class_names.dedup();
    let manifest = DatasetManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_root: ".".into(),
        seed: config.seed,
        points: config.points,
        kinds: config.kinds.clone(),
        severities: config.severities.clone(),
        table: table_ref,
        table_digest: table.digest(),
        class_names,
        samples,
        failures,
    };
    let failed = manifest.failures.len();
    write_file(&manifest_path, manifest.to_json().as_bytes())?;
    Ok(GenerateOutcome {
        manifest,
        manifest_path,
        written,
        failed,
    })
}
