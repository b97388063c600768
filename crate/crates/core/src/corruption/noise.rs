//! Noise corruptions: per-point distributional jitter, impulse displacement,
//! anchored upsampling and background clutter.

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CorruptionError;
use crate::geometry::PointCloud;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Uniform,
    Gaussian,
}

/// Perturbs every coordinate independently: `U(-scale, scale)` or `N(0, scale^2)`.
pub fn distribution_noise(
    cloud: &PointCloud,
    dist: NoiseDistribution,
    scale: f64,
    seed: u64,
) -> Result<PointCloud, CorruptionError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CorruptionError::Parameter(format!(
            "noise scale must be positive, got {scale}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let points = match dist {
        NoiseDistribution::Uniform => cloud
            .points()
            .iter()
            .map(|p| {
                p + Vector3::new(
                    rng.random_range(-scale..=scale),
                    rng.random_range(-scale..=scale),
                    rng.random_range(-scale..=scale),
                )
            })
            .collect(),
        NoiseDistribution::Gaussian => {
            let normal = Normal::new(0.0, scale).expect("positive finite sigma");
            cloud
                .points()
                .iter()
                .map(|p| {
                    p + Vector3::new(
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                    )
                })
                .collect()
        }
    };
    Ok(PointCloud::from_points_unchecked(points))
}

/// Result of [`impulse_noise`] with the displaced indices (ascending).
#[derive(Debug, Clone)]
pub struct ImpulseOutcome {
    pub cloud: PointCloud,
    pub displaced: Vec<usize>,
}

/// Moves `count` distinct points by `±magnitude` on every axis, signs random.
pub fn impulse_noise(
    cloud: &PointCloud,
    count: usize,
    magnitude: f64,
    seed: u64,
) -> Result<ImpulseOutcome, CorruptionError> {
    if count > cloud.len() {
        return Err(CorruptionError::CountExceedsCloud {
            count,
            n: cloud.len(),
        });
    }
    if !(magnitude >= 0.0) || !magnitude.is_finite() {
        return Err(CorruptionError::Parameter(format!(
            "impulse magnitude must be non-negative, got {magnitude}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut displaced = sample(&mut rng, cloud.len(), count).into_vec();
    displaced.sort_unstable();
    let mut points = cloud.points().to_vec();
    for &i in &displaced {
        let mut sign = || if rng.random::<bool>() { magnitude } else { -magnitude };
        points[i] += Vector3::new(sign(), sign(), sign());
    }
    Ok(ImpulseOutcome {
        cloud: PointCloud::from_points_unchecked(points),
        displaced,
    })
}

/// Result of [`upsampling_noise`] with the anchor of each appended point.
#[derive(Debug, Clone)]
pub struct UpsamplingOutcome {
    pub cloud: PointCloud,
    pub anchors: Vec<usize>,
}

/// Appends `count` points, each a random anchor jittered by `U(-bound, bound)`
/// per axis. Anchors are drawn without replacement while `count <= n`.
pub fn upsampling_noise(
    cloud: &PointCloud,
    count: usize,
    bound: f64,
    seed: u64,
) -> Result<UpsamplingOutcome, CorruptionError> {
    if cloud.is_empty() {
        return Err(CorruptionError::EmptyInput);
    }
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(CorruptionError::Parameter(format!(
            "upsampling bound must be non-negative, got {bound}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let n = cloud.len();
    let anchors: Vec<usize> = if count <= n {
        sample(&mut rng, n, count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..n)).collect()
    };
    let mut points = cloud.points().to_vec();
    points.reserve(count);
    for &a in &anchors {
        let mut jitter = || {
            if bound > 0.0 {
                rng.random_range(-bound..=bound)
            } else {
                0.0
            }
        };
        let offset = Vector3::new(jitter(), jitter(), jitter());
        points.push(cloud.points()[a] + offset);
    }
    Ok(UpsamplingOutcome {
        cloud: PointCloud::from_points_unchecked(points),
        anchors,
    })
}

/// Appends `count` points uniform in the cube `[-1, 1]^3`.
pub fn background_noise(cloud: &PointCloud, count: usize, seed: u64) -> Result<PointCloud, CorruptionError> {
    if cloud.is_empty() {
        return Err(CorruptionError::EmptyInput);
    }
    let mut rng = rng_from_seed(seed);
    let mut points = cloud.points().to_vec();
    points.extend((0..count).map(|_| {
        Point3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        )
    }));
    Ok(PointCloud::from_points_unchecked(points))
}
