//! Radial-basis-function displacement interpolation.

use nalgebra::{DMatrix, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::DeformError;
use crate::geometry::PointCloud;

/// Systems with an estimated 2-norm condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// `sqrt(d^2 + r^2)`
    MultiQuadric,
    /// `1 / sqrt(d^2 + r^2)`
    InverseMultiQuadric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub variant: KernelVariant,
    pub shape: f64,
}

impl RbfKernel {
    pub fn new(variant: KernelVariant, shape: f64) -> Result<Self, DeformError> {
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(DeformError::ShapeParameter(shape));
        }
        Ok(Self { variant, shape })
    }

    pub fn eval(&self, distance: f64) -> f64 {
        let q = (distance * distance + self.shape * self.shape).sqrt();
        match self.variant {
            KernelVariant::MultiQuadric => q,
            KernelVariant::InverseMultiQuadric => 1.0 / q,
        }
    }
}

/// A solved interpolant: `p -> p + sum_a w_a phi(|p - c_a|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfDeformation {
    kernel: RbfKernel,
    centers: Vec<Point3<f64>>,
    displacements: Vec<Vector3<f64>>,
    weights: Vec<Vector3<f64>>,
    condition: f64,
}

impl RbfDeformation {
    /// Solves `Phi w = D` per axis with a partially pivoted LU factorization.
    pub fn solve(
        centers: &[Point3<f64>],
        displacements: &[Vector3<f64>],
        kernel: RbfKernel,
    ) -> Result<Self, DeformError> {
        let n = centers.len();
        if n == 0 {
            return Err(DeformError::NoCenters);
        }
        if displacements.len() != n {
            return Err(DeformError::LengthMismatch {
                centers: n,
                displacements: displacements.len(),
            });
        }
        for a in 0..n {
            for b in a + 1..n {
                if centers[a] == centers[b] {
                    return Err(DeformError::DuplicateCenter { first: a, second: b });
                }
            }
        }
        let phi = DMatrix::from_fn(n, n, |a, b| kernel.eval((centers[a] - centers[b]).norm()));
        let condition = condition_number(&phi);
        if !(condition <= MAX_CONDITION) {
            return Err(DeformError::IllConditioned { condition });
        }
        let rhs = DMatrix::from_fn(n, 3, |a, axis| displacements[a][axis]);
        let lu = phi.lu();
        let solved = lu.solve(&rhs).ok_or(DeformError::IllConditioned {
            condition: f64::INFINITY,
        })?;
        let weights = (0..n)
            .map(|a| Vector3::new(solved[(a, 0)], solved[(a, 1)], solved[(a, 2)]))
            .collect();
        Ok(Self {
            kernel,
            centers: centers.to_vec(),
            displacements: displacements.to_vec(),
            weights,
            condition,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &[Point3<f64>] {
        &self.centers
    }

    pub fn weights(&self) -> &[Vector3<f64>] {
        &self.weights
    }

    pub fn prescribed_displacements(&self) -> &[Vector3<f64>] {
        &self.displacements
    }

    /// Estimated 2-norm condition number of the interpolation matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn displacement_at(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.centers
            .iter()
            .zip(&self.weights)
            .fold(Vector3::zeros(), |acc, (c, w)| acc + w * self.kernel.eval((p - c).norm()))
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map(|p| p + self.displacement_at(p))
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}
