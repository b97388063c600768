//! Per-severity parameters for every corruption kind.
//!
//! The table serializes as a JSON object keyed by canonical corruption name,
//! each value a five-element array (severity 1 first). Keys missing from an
//! override file keep their defaults.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorruptionError, CorruptionKind};
use crate::occlusion::{AutoRayBudget, LidarConfig};

/// A point count that is either fixed or a fraction of the input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountRule {
    Fixed(usize),
    /// `floor(n * numerator / denominator)` for an `n`-point input.
    Fraction { numerator: usize, denominator: usize },
}

impl CountRule {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            CountRule::Fixed(c) => c,
            CountRule::Fraction {
                numerator,
                denominator,
            } => n * numerator / denominator.max(1),
        }
    }

    fn magnitude(&self) -> f64 {
        match *self {
            CountRule::Fixed(c) => c as f64,
            CountRule::Fraction {
                numerator,
                denominator,
            } => numerator as f64 / denominator.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseParams {
    pub count: CountRule,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsamplingParams {
    pub count: CountRule,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundParams {
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityParams {
    pub clusters: usize,
    pub cluster_size: usize,
    /// Fraction of each cluster removed (decrease) or duplicated (increase).
    pub fraction: f64,
    /// Gaussian jitter applied to duplicated points.
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoutParams {
    pub clusters: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationParams {
    pub max_angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearParams {
    pub max_coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformParams {
    pub distance: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionParams {
    /// Which of the five canonical azimuths to view from (1..=5).
    pub view: u8,
    pub camera_distance: f64,
    pub fov_deg: f64,
    pub budget: AutoRayBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarParams {
    pub view: u8,
    pub camera_distance: f64,
    pub scan: LidarConfig,
    /// Returns are randomly downsampled to at most this many points.
    pub max_points: usize,
}

/// Parameters for all fifteen kinds at severities 1..=5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityTable {
    pub occlusion: [OcclusionParams; 5],
    pub lidar: [LidarParams; 5],
    pub density_inc: [DensityParams; 5],
    pub density_dec: [DensityParams; 5],
    pub cutout: [CutoutParams; 5],
    pub uniform: [UniformParams; 5],
    pub gaussian: [GaussianParams; 5],
    pub impulse: [ImpulseParams; 5],
    pub upsampling: [UpsamplingParams; 5],
    pub background: [BackgroundParams; 5],
    pub rotation: [RotationParams; 5],
    pub shear: [ShearParams; 5],
    pub ffd: [DeformParams; 5],
    pub rbf: [DeformParams; 5],
    pub inv_rbf: [DeformParams; 5],
}

fn by_severity<T>(f: impl Fn(usize) -> T) -> [T; 5] {
    std::array::from_fn(|i| f(i + 1))
}

impl Default for SeverityTable {
    fn default() -> Self {
        let deform = by_severity(|s| DeformParams {
            distance: 0.1 * s as f64,
            resolution: 5,
        });
        let density = by_severity(|s| DensityParams {
            clusters: s,
            cluster_size: 100,
            fraction: 0.75,
            jitter: 0.01,
        });
        Self {
            occlusion: by_severity(|s| OcclusionParams {
                view: s as u8,
                camera_distance: crate::occlusion::scan::DEFAULT_DISTANCE,
                fov_deg: crate::occlusion::scan::DEFAULT_FOV,
                budget: AutoRayBudget::default(),
            }),
            lidar: by_severity(|s| LidarParams {
                view: s as u8,
                camera_distance: crate::occlusion::scan::DEFAULT_DISTANCE,
                scan: LidarConfig::default(),
                max_points: 1024,
            }),
            density_inc: density,
            density_dec: density,
            cutout: by_severity(|s| CutoutParams { clusters: s, k: 50 }),
            uniform: by_severity(|s| UniformParams {
                scale: 0.01 * s as f64,
            }),
            gaussian: by_severity(|s| GaussianParams {
                sigma: 0.005 + 0.005 * s as f64,
            }),
            impulse: by_severity(|s| ImpulseParams {
                count: CountRule::Fraction {
                    numerator: s,
                    denominator: 40,
                },
                magnitude: 0.05,
            }),
            upsampling: by_severity(|s| UpsamplingParams {
                count: CountRule::Fraction {
                    numerator: s,
                    denominator: 10,
                },
                bound: 0.05,
            }),
            background: by_severity(|s| BackgroundParams { count: 20 * s }),
            rotation: by_severity(|s| RotationParams {
                max_angle_deg: 3.0 * s as f64,
            }),
            shear: by_severity(|s| ShearParams {
                max_coeff: 0.05 * s as f64,
            }),
            ffd: deform,
            rbf: deform,
            inv_rbf: deform,
        }
    }
}

fn non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

impl SeverityTable {
    pub fn from_json(text: &str) -> Result<Self, CorruptionError> {
        let table: Self =
            serde_json::from_str(text).map_err(|e| CorruptionError::Table(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_vec(self).expect("table serializes");
        hex::encode(Sha256::digest(&compact))
    }

    /// The dominant magnitude parameter of `kind` at each severity.
    pub fn magnitudes(&self, kind: CorruptionKind) -> [f64; 5] {
        use CorruptionKind::*;
        match kind {
            Occlusion => self.occlusion.map(|p| p.view as f64),
            Lidar => self.lidar.map(|p| p.view as f64),
            LocalDensityInc => self.density_inc.map(|p| p.clusters as f64),
            LocalDensityDec => self.density_dec.map(|p| p.clusters as f64),
            Cutout => self.cutout.map(|p| p.clusters as f64),
            Uniform => self.uniform.map(|p| p.scale),
            Gaussian => self.gaussian.map(|p| p.sigma),
            Impulse => self.impulse.map(|p| p.count.magnitude()),
            Upsampling => self.upsampling.map(|p| p.count.magnitude()),
            Background => self.background.map(|p| p.count as f64),
            Rotation => self.rotation.map(|p| p.max_angle_deg),
            Shear => self.shear.map(|p| p.max_coeff),
            Ffd => self.ffd.map(|p| p.distance),
            Rbf => self.rbf.map(|p| p.distance),
            InvRbf => self.inv_rbf.map(|p| p.distance),
        }
    }

    /// Checks ranges and that magnitudes never decrease with severity.
    pub fn validate(&self) -> Result<(), CorruptionError> {
        let bad = |kind: CorruptionKind, reason: &str| {
            Err(CorruptionError::Table(format!("{}: {reason}", kind.name())))
        };
        for kind in CorruptionKind::ALL {
            let m = self.magnitudes(kind);
            if !m.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return bad(kind, "parameters must be finite and non-negative");
            }
            if !matches!(kind, CorruptionKind::Occlusion | CorruptionKind::Lidar) && !non_decreasing(&m) {
                return bad(kind, "dominant parameter decreases with severity");
            }
        }
        if self.uniform.iter().any(|p| !(p.scale > 0.0)) {
            return bad(CorruptionKind::Uniform, "scale must be positive");
        }
        if self.gaussian.iter().any(|p| !(p.sigma > 0.0)) {
            return bad(CorruptionKind::Gaussian, "sigma must be positive");
        }
        if self.rotation.iter().any(|p| !(p.max_angle_deg > 0.0 && p.max_angle_deg <= 15.0)) {
            return bad(CorruptionKind::Rotation, "max angle must be in (0, 15] degrees");
        }
        if self.shear.iter().any(|p| !(p.max_coeff > 0.0)) {
            return bad(CorruptionKind::Shear, "max coefficient must be positive");
        }
        for (kind, rows) in [
            (CorruptionKind::LocalDensityInc, &self.density_inc),
            (CorruptionKind::LocalDensityDec, &self.density_dec),
        ] {
            if rows.iter().any(|p| !(0.0..=1.0).contains(&p.fraction) || p.cluster_size == 0 || p.clusters == 0) {
                return bad(kind, "need clusters >= 1, cluster_size >= 1, fraction in [0, 1]");
            }
        }
        if self.cutout.iter().any(|p| p.k == 0) {
            return bad(CorruptionKind::Cutout, "k must be positive");
        }
        for (kind, rows) in [
            (CorruptionKind::Ffd, &self.ffd),
            (CorruptionKind::Rbf, &self.rbf),
            (CorruptionKind::InvRbf, &self.inv_rbf),
        ] {
            if rows.iter().any(|p| p.resolution < 2) {
                return bad(kind, "lattice resolution must be at least 2");
            }
        }
        if self.occlusion.iter().any(|p| !(1..=5).contains(&p.view))
            || self.lidar.iter().any(|p| !(1..=5).contains(&p.view))
        {
            return bad(CorruptionKind::Occlusion, "view must be in 1..=5");
        }
        Ok(())
    }
}
