//! Linear transformation corruptions: bounded random rotation and xy shear.

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rand::Rng as _;

use super::CorruptionError;
use crate::geometry::PointCloud;
use crate::rng::rng_from_seed;

pub const MAX_ROTATION_DEG: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RotationOutcome {
    pub cloud: PointCloud,
    /// Sampled angles about x, y, z in degrees.
    pub angles_deg: [f64; 3],
    /// Row-major `Rz * Ry * Rx`.
    pub matrix: [[f64; 3]; 3],
}

fn rotation_matrix(angles_deg: [f64; 3]) -> Matrix3<f64> {
    let [ax, ay, az] = angles_deg.map(f64::to_radians);
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), ax);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), ay);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), az);
    (rz * ry * rx).into_inner()
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

/// Rotates by `Rz * Ry * Rx` with each angle drawn from `U(-max, max)` degrees.
pub fn random_rotation(cloud: &PointCloud, max_angle_deg: f64, seed: u64) -> Result<RotationOutcome, CorruptionError> {
    if !(max_angle_deg > 0.0 && max_angle_deg <= MAX_ROTATION_DEG) {
        return Err(CorruptionError::Parameter(format!(
            "rotation bound must be in (0, {MAX_ROTATION_DEG}] degrees, got {max_angle_deg}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let angles: [f64; 3] = std::array::from_fn(|_| rng.random_range(-max_angle_deg..=max_angle_deg));
    let m = rotation_matrix(angles);
    Ok(RotationOutcome {
        cloud: cloud.map(|p| Point3::from(m * p.coords)),
        angles_deg: angles,
        matrix: rows(&m),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShearOutcome {
    pub cloud: PointCloud,
    /// `x' = x + a z`, `y' = y + b z`.
    pub a: f64,
    pub b: f64,
}

/// Shears x and y proportionally to z with coefficients from `U(-max, max)`.
pub fn random_shear(cloud: &PointCloud, max_coeff: f64, seed: u64) -> Result<ShearOutcome, CorruptionError> {
    if !(max_coeff > 0.0) || !max_coeff.is_finite() {
        return Err(CorruptionError::Parameter(format!(
            "shear bound must be positive, got {max_coeff}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let a = rng.random_range(-max_coeff..=max_coeff);
    let b = rng.random_range(-max_coeff..=max_coeff);
    Ok(ShearOutcome {
        cloud: cloud.map(|p| Point3::new(p.x + a * p.z, p.y + b * p.z, p.z)),
        a,
        b,
    })
}
