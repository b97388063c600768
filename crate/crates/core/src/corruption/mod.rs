//! The fifteen corruption kinds, their severity parameters, and the
//! dispatcher that applies one `(kind, severity)` pair to a sample.

pub mod density;
pub mod noise;
pub mod table;
pub mod transform;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use density::{cutout, local_density, ClusterRecord, DensityMode, DensityOutcome};
pub use noise::{background_noise, distribution_noise, impulse_noise, upsampling_noise, NoiseDistribution};
pub use table::{CountRule, SeverityTable};
pub use transform::{random_rotation, random_shear};

use crate::deform::{DeformError, FfdLattice, KernelVariant, RbfDeformation, RbfKernel};
use crate::geometry::{PointCloud, TriangleMesh};
use crate::occlusion::{self, Camera, OcclusionError, ViewPose};
use crate::rng::{mix_keys, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorruptionError {
    #[error("{0} needs the source mesh but only a point cloud was given")]
    MeshRequired(CorruptionKind),
    #[error("unknown corruption kind {0:?}")]
    UnknownKind(String),
    #[error("severity must be in 1..=5, got {0}")]
    Severity(u8),
    #[error("count {count} exceeds the {n} available points")]
    CountExceedsCloud { count: usize, n: usize },
    #[error("input cloud is empty")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("severity table: {0}")]
    Table(String),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Occlusion(#[from] OcclusionError),
}

/// The fifteen corruption kinds, ordered density, noise, transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorruptionKind {
    #[serde(rename = "occlusion")]
    Occlusion,
    #[serde(rename = "lidar")]
    Lidar,
    #[serde(rename = "density_inc")]
    LocalDensityInc,
    #[serde(rename = "density_dec")]
    LocalDensityDec,
    #[serde(rename = "cutout")]
    Cutout,
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "impulse")]
    Impulse,
    #[serde(rename = "upsampling")]
    Upsampling,
    #[serde(rename = "background")]
    Background,
    #[serde(rename = "rotation")]
    Rotation,
    #[serde(rename = "shear")]
    Shear,
    #[serde(rename = "ffd")]
    Ffd,
    #[serde(rename = "rbf")]
    Rbf,
    #[serde(rename = "inv_rbf")]
    InvRbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Density,
    Noise,
    Transformation,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 15] = [
        CorruptionKind::Occlusion,
        CorruptionKind::Lidar,
        CorruptionKind::LocalDensityInc,
        CorruptionKind::LocalDensityDec,
        CorruptionKind::Cutout,
        CorruptionKind::Uniform,
        CorruptionKind::Gaussian,
        CorruptionKind::Impulse,
        CorruptionKind::Upsampling,
        CorruptionKind::Background,
        CorruptionKind::Rotation,
        CorruptionKind::Shear,
        CorruptionKind::Ffd,
        CorruptionKind::Rbf,
        CorruptionKind::InvRbf,
    ];

    /// Canonical manifest name.
    pub fn name(self) -> &'static str {
        use CorruptionKind::*;
        match self {
            Occlusion => "occlusion",
            Lidar => "lidar",
            LocalDensityInc => "density_inc",
            LocalDensityDec => "density_dec",
            Cutout => "cutout",
            Uniform => "uniform",
            Gaussian => "gaussian",
            Impulse => "impulse",
            Upsampling => "upsampling",
            Background => "background",
            Rotation => "rotation",
            Shear => "shear",
            Ffd => "ffd",
            Rbf => "rbf",
            InvRbf => "inv_rbf",
        }
    }

    /// Position in [`Self::ALL`].
    pub fn ordinal(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed in ALL")
    }

    pub fn category(self) -> Category {
        use CorruptionKind::*;
        match self {
            Occlusion | Lidar | LocalDensityInc | LocalDensityDec | Cutout => Category::Density,
            Uniform | Gaussian | Impulse | Upsampling | Background => Category::Noise,
            Rotation | Shear | Ffd | Rbf | InvRbf => Category::Transformation,
        }
    }

    /// Occlusion and LiDAR ray-cast the source mesh; severity selects a view.
    pub fn needs_mesh(self) -> bool {
        matches!(self, CorruptionKind::Occlusion | CorruptionKind::Lidar)
    }

    /// The thirteen kinds that operate on a point cloud alone.
    pub fn cloud_kinds() -> impl Iterator<Item = CorruptionKind> {
        Self::ALL.into_iter().filter(|k| !k.needs_mesh())
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = CorruptionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match norm.as_str() {
            "local_density_inc" => "density_inc",
            "local_density_dec" => "density_dec",
            "inverse_rbf" | "invrbf" => "inv_rbf",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| CorruptionError::UnknownKind(s.to_string()))
    }
}

/// Severity level in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Severity(u8);

impl Severity {
    pub const ALL: [Severity; 5] = [Severity(1), Severity(2), Severity(3), Severity(4), Severity(5)];

    pub fn new(level: u8) -> Result<Self, CorruptionError> {
        if (1..=5).contains(&level) {
            Ok(Self(level))
        } else {
            Err(CorruptionError::Severity(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based row in a [`SeverityTable`] array.
    pub fn row(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u8> for Severity {
    type Error = CorruptionError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Severity> for u8 {
    fn from(s: Severity) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self, CorruptionError> {
        Ok(Self {
            kind,
            severity: Severity::new(severity)?,
            seed,
        })
    }

    /// Seed of the random stream for one sample.
    pub fn stream_seed(&self, sample_key: u64) -> u64 {
        mix_keys(&[
            self.seed,
            self.kind.ordinal() as u64,
            self.severity.get() as u64,
            sample_key,
        ])
    }
}

/// What a corruption may read: the normalized cloud and, when available,
/// the source mesh in the same normalized frame.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionInput<'a> {
    pub cloud: &'a PointCloud,
    pub mesh: Option<&'a TriangleMesh>,
}

impl<'a> CorruptionInput<'a> {
    pub fn cloud(cloud: &'a PointCloud) -> Self {
        Self { cloud, mesh: None }
    }

    pub fn with_mesh(cloud: &'a PointCloud, mesh: &'a TriangleMesh) -> Self {
        Self {
            cloud,
            mesh: Some(mesh),
        }
    }
}

/// Per-output record of how a corrupted cloud was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
    pub sample_key: u64,
    pub stream_seed: u64,
    pub input_digest: String,
    pub input_points: usize,
    pub output_points: usize,
    /// The severity-table row used.
    pub parameters: serde_json::Value,
    /// Values sampled while corrupting (angles, anchors, control displacements, ...).
    pub derived: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Corrupted {
    pub cloud: PointCloud,
    pub provenance: Provenance,
}

/// Hex SHA-256 over the little-endian f64 coordinates of `cloud`.
pub fn cloud_digest(cloud: &PointCloud) -> String {
    let mut h = Sha256::new();
    for p in cloud.points() {
        for c in [p.x, p.y, p.z] {
            h.update(c.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn row_json<T: Serialize>(row: &T) -> serde_json::Value {
    serde_json::to_value(row).expect("table rows serialize")
}

/// Applies one corruption to one sample.
///
/// The random stream is keyed by `(spec.seed, kind, severity, sample_key)`, so
/// samples can be corrupted in any order or in parallel.
pub fn apply_corruption(
    input: CorruptionInput<'_>,
    spec: &CorruptionSpec,
    table: &SeverityTable,
    sample_key: u64,
) -> Result<Corrupted, CorruptionError> {
    use CorruptionKind::*;
    let cloud = input.cloud;
    if cloud.is_empty() {
        return Err(CorruptionError::EmptyInput);
    }
    let row = spec.severity.row();
    let seed = spec.stream_seed(sample_key);
    let n = cloud.len();

    let (out, parameters, derived) = match spec.kind {
        Occlusion => {
            let mesh = input.mesh.ok_or(MeshRequired(spec.kind))?;
            let p = &table.occlusion[row];
            let pose = ViewPose::for_view(p.view, seed)?.with_distance(p.camera_distance)?;
            let scan = occlusion::raycast_auto(mesh, &pose, &Camera { fov_deg: p.fov_deg }, &p.budget)?;
            let derived = json!({ "pose": pose, "grid": scan.grid });
            (scan.cloud, row_json(p), derived)
        }
        Lidar => {
            let mesh = input.mesh.ok_or(MeshRequired(spec.kind))?;
            let p = &table.lidar[row];
            let pose = ViewPose::for_view(p.view, seed)?.with_distance(p.camera_distance)?;
            let scan = occlusion::lidar_scan(mesh, &pose, &p.scan)?;
            let returns = scan.len();
            let cloud = if returns > p.max_points {
                let mut rng = rng_from_seed(mix_keys(&[seed, 1]));
                let mut keep = sample(&mut rng, returns, p.max_points).into_vec();
                keep.sort_unstable();
                PointCloud::from_points_unchecked(keep.iter().map(|&i| scan.cloud.points()[i]).collect())
            } else {
                scan.cloud
            };
            let derived = json!({ "pose": pose, "returns": returns });
            (cloud, row_json(p), derived)
        }
        LocalDensityInc | LocalDensityDec => {
            let (p, mode) = if spec.kind == LocalDensityInc {
                (&table.density_inc[row], DensityMode::Increase)
            } else {
                (&table.density_dec[row], DensityMode::Decrease)
            };
            let o = local_density(cloud, mode, p.clusters, p.cluster_size, p.fraction, p.jitter, seed)?;
            let anchors: Vec<usize> = o.clusters.iter().map(|c| c.anchor).collect();
            (o.cloud, row_json(p), json!({ "anchors": anchors }))
        }
        Cutout => {
            let p = &table.cutout[row];
            let o = cutout(cloud, p.clusters, p.k, seed)?;
            let anchors: Vec<usize> = o.clusters.iter().map(|c| c.anchor).collect();
            (o.cloud, row_json(p), json!({ "anchors": anchors }))
        }
        Uniform => {
            let p = &table.uniform[row];
            let c = distribution_noise(cloud, NoiseDistribution::Uniform, p.scale, seed)?;
            (c, row_json(p), json!({}))
        }
        Gaussian => {
            let p = &table.gaussian[row];
            let c = distribution_noise(cloud, NoiseDistribution::Gaussian, p.sigma, seed)?;
            (c, row_json(p), json!({}))
        }
        Impulse => {
            let p = &table.impulse[row];
            let count = p.count.resolve(n);
            let o = impulse_noise(cloud, count, p.magnitude, seed)?;
            (o.cloud, row_json(p), json!({ "count": count, "displaced": o.displaced }))
        }
        Upsampling => {
            let p = &table.upsampling[row];
            let count = p.count.resolve(n);
            let o = upsampling_noise(cloud, count, p.bound, seed)?;
            (o.cloud, row_json(p), json!({ "count": count }))
        }
        Background => {
            let p = &table.background[row];
            (background_noise(cloud, p.count, seed)?, row_json(p), json!({}))
        }
        Rotation => {
            let p = &table.rotation[row];
            let o = random_rotation(cloud, p.max_angle_deg, seed)?;
            let derived = json!({ "angles_deg": o.angles_deg, "matrix": o.matrix });
            (o.cloud, row_json(p), derived)
        }
        Shear => {
            let p = &table.shear[row];
            let o = random_shear(cloud, p.max_coeff, seed)?;
            (o.cloud, row_json(p), json!({ "a": o.a, "b": o.b }))
        }
        Ffd | Rbf | InvRbf => {
            let p = match spec.kind {
                Ffd => &table.ffd[row],
                Rbf => &table.rbf[row],
                _ => &table.inv_rbf[row],
            };
            let lattice = FfdLattice::around(cloud, p.resolution)?.perturbed(p.distance, seed)?;
            let displacements: Vec<[f64; 3]> =
                lattice.displacements().iter().map(|d| [d.x, d.y, d.z]).collect();
            if spec.kind == Ffd {
                let derived = json!({ "bounds": lattice.bounds(), "displacements": displacements });
                (lattice.apply(cloud), row_json(p), derived)
            } else {
                let variant = if spec.kind == Rbf {
                    KernelVariant::MultiQuadric
                } else {
                    KernelVariant::InverseMultiQuadric
                };
                // shape parameter: mean control spacing
                let shape = lattice.spacing().mean();
                let kernel = RbfKernel::new(variant, shape)?;
                let deformation = RbfDeformation::solve(&lattice.rest_positions(), lattice.displacements(), kernel)?;
                let derived = json!({
                    "bounds": lattice.bounds(),
                    "kernel": kernel,
                    "condition": deformation.condition(),
                    "displacements": displacements,
                });
                (deformation.apply(cloud), row_json(p), derived)
            }
        }
    };

    let input_digest = cloud_digest(cloud);
    let provenance = Provenance {
        kind: spec.kind,
        severity: spec.severity,
        seed: spec.seed,
        sample_key,
        stream_seed: seed,
        input_digest,
        input_points: n,
        output_points: out.len(),
        parameters,
        derived,
    };
    Ok(Corrupted { cloud: out, provenance })
}

use CorruptionError::MeshRequired;
