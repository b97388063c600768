//! Free-form deformation over a Bernstein control lattice.

use nalgebra::{Point3, Vector3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::DeformError;
use crate::geometry::{Aabb, PointCloud};
use crate::rng::rng_from_seed;

/// A regular control lattice with one displacement per control point.
///
/// Control points are stored with the z index varying fastest:
/// `flat = (i * res + j) * res + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfdLattice {
    bounds: Aabb,
    resolution: usize,
    displacements: Vec<Vector3<f64>>,
}

impl FfdLattice {
    /// Identity lattice spanning `bounds`.
    pub fn new(bounds: Aabb, resolution: usize) -> Result<Self, DeformError> {
        if resolution < 2 {
            return Err(DeformError::Resolution(resolution));
        }
        let ext = bounds.extent();
        if (0..3).any(|i| !(ext[i] > 0.0) || !ext[i].is_finite()) {
            return Err(DeformError::DegenerateBounds);
        }
        Ok(Self {
            bounds,
            resolution,
            displacements: vec![Vector3::zeros(); resolution.pow(3)],
        })
    }

    /// Lattice over the cloud's bounding box grown to contain `[-1, 1]^3`.
    pub fn around(cloud: &PointCloud, resolution: usize) -> Result<Self, DeformError> {
        Self::new(cloud.bounds().union(&Aabb::cube(1.0)), resolution)
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacements.is_empty()
    }

    /// Distance between neighboring control points along each axis.
    pub fn spacing(&self) -> Vector3<f64> {
        self.bounds.extent() / (self.resolution - 1) as f64
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution + j) * self.resolution + k
    }

    /// Rest position of control point `(i, j, k)`.
    pub fn rest_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let s = self.spacing();
        self.bounds.min + Vector3::new(i as f64 * s.x, j as f64 * s.y, k as f64 * s.z)
    }

    /// All rest positions in flat order.
    pub fn rest_positions(&self) -> Vec<Point3<f64>> {
        let r = self.resolution;
        let mut out = Vec::with_capacity(r * r * r);
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    out.push(self.rest_position(i, j, k));
                }
            }
        }
        out
    }

    pub fn displacements(&self) -> &[Vector3<f64>] {
        &self.displacements
    }

    pub fn displacements_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.displacements
    }

    /// Copy of this lattice where every control point moves `distance` along
    /// an independent uniformly random direction.
    pub fn perturbed(&self, distance: f64, seed: u64) -> Result<Self, DeformError> {
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(DeformError::NegativeDistance(distance));
        }
        let mut rng = rng_from_seed(seed);
        let mut out = self.clone();
        for d in &mut out.displacements {
            *d = random_unit_vector(&mut rng) * distance;
        }
        Ok(out)
    }

    /// Lattice coordinates of `p` in `[0, 1]^3`, clamped at the boundary.
    pub fn local_coords(&self, p: &Point3<f64>) -> [f64; 3] {
        let ext = self.bounds.extent();
        let mut uvw = [0.0; 3];
        for a in 0..3 {
            uvw[a] = ((p[a] - self.bounds.min[a]) / ext[a]).clamp(0.0, 1.0);
        }
        uvw
    }

    /// Displacement field at `p`.
    pub fn displacement_at(&self, p: &Point3<f64>) -> Vector3<f64> {
        let [u, v, w] = self.local_coords(p);
        let degree = self.resolution - 1;
        let bu = bernstein_basis(degree, u);
        let bv = bernstein_basis(degree, v);
        let bw = bernstein_basis(degree, w);
        let mut acc = Vector3::zeros();
        let mut flat = 0;
        for &wu in &bu {
            for &wv in &bv {
                let wuv = wu * wv;
                for &ww in &bw {
                    acc += self.displacements[flat] * (wuv * ww);
                    flat += 1;
                }
            }
        }
        acc
    }

    /// Deforms every point: `p + sum B_i(u) B_j(v) B_k(w) d_ijk`.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map(|p| p + self.displacement_at(p))
    }
}

/// Bernstein basis polynomials `B_{i,n}(t)` for `i = 0..=n`.
pub fn bernstein_basis(degree: usize, t: f64) -> Vec<f64> {
    // de Casteljau-style triangle keeps every term a convex combination
    let mut b = vec![0.0; degree + 1];
    b[0] = 1.0;
    let s = 1.0 - t;
    for n in 1..=degree {
        let mut prev = 0.0;
        for item in b.iter_mut().take(n + 1) {
            let cur = *item;
            *item = s * cur + t * prev;
            prev = cur;
        }
    }
    b
}

/// Uniform direction on the unit sphere (Marsaglia's method).
pub fn random_unit_vector(rng: &mut crate::rng::Rng) -> Vector3<f64> {
    loop {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let s = a * a + b * b;
        if s < 1.0 && s > 0.0 {
            let f = 2.0 * (1.0 - s).sqrt();
            let v = Vector3::new(a * f, b * f, 1.0 - 2.0 * s);
            return v / v.norm();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn control_point_counts_and_spacing() {
        let l = FfdLattice::new(Aabb::cube(1.0), 5).unwrap();
        assert_eq!(l.len(), 125);
        assert_eq!(l.spacing(), Vector3::new(0.5, 0.5, 0.5));
        let l2 = FfdLattice::new(Aabb::cube(1.0), 2).unwrap();
        assert_eq!(l2.len(), 8);
        for p in l2.rest_positions() {
            assert!(p.coords.iter().all(|c| c.abs() == 1.0));
        }
        assert_eq!(FfdLattice::new(Aabb::cube(1.0), 1), Err(DeformError::Resolution(1)));
        let flat = Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(FfdLattice::new(flat, 5), Err(DeformError::DegenerateBounds));
    }

    #[test]
    fn bernstein_matches_closed_form() {
        for n in 1..7 {
            for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
                let b = bernstein_basis(n, t);
                for (i, bi) in b.iter().enumerate() {
                    let expected =
                        binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32);
                    assert!((bi - expected).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = rng_from_seed(21);
        for _ in 0..1000 {
            let (u, v, w): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let (bu, bv, bw) = (bernstein_basis(4, u), bernstein_basis(4, v), bernstein_basis(4, w));
            let mut sum = 0.0;
            for a in &bu {
                for b in &bv {
                    for c in &bw {
                        sum += a * b * c;
                    }
                }
            }
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        let c = random_cloud(200, 1);
        let l = FfdLattice::around(&c, 5).unwrap();
        for (a, b) in c.points().iter().zip(l.apply(&c).points()) {
            assert!((a - b).norm() <= 1e-12);
        }
        let l0 = l.perturbed(0.0, 3).unwrap();
        assert_eq!(l0.apply(&c), c);
    }

    #[test]
    fn uniform_displacement_translates() {
        let c = random_cloud(100, 2);
        let mut l = FfdLattice::around(&c, 5).unwrap();
        let t = Vector3::new(0.1, -0.2, 0.05);
        l.displacements_mut().iter_mut().for_each(|d| *d = t);
        for (a, b) in c.points().iter().zip(l.apply(&c).points()) {
            assert!(((b - a) - t).norm() < 1e-12);
        }
    }

    #[test]
    fn affine_control_displacements_are_reproduced() {
        let c = random_cloud(300, 4);
        let mut l = FfdLattice::around(&c, 5).unwrap();
        let a = Matrix3::new(0.1, -0.3, 0.2, 0.05, 0.4, -0.1, -0.2, 0.0, 0.3);
        let t = Vector3::new(0.3, 0.1, -0.2);
        let rest = l.rest_positions();
        for (d, r) in l.displacements_mut().iter_mut().zip(&rest) {
            *d = a * r.coords + t;
        }
        for (p, q) in c.points().iter().zip(l.apply(&c).points()) {
            let expected = p + a * p.coords + t;
            assert!((q - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn displacement_bounded_by_control_norm() {
        let c = random_cloud(500, 5);
        let l = FfdLattice::around(&c, 5).unwrap().perturbed(0.3, 8).unwrap();
        for d in l.displacements() {
            assert!((d.norm() - 0.3).abs() < 1e-12);
        }
        for (a, b) in c.points().iter().zip(l.apply(&c).points()) {
            assert!((b - a).norm() <= 0.3 + 1e-9);
        }
    }

    #[test]
    fn random_directions_are_isotropic() {
        let mut rng = rng_from_seed(77);
        let n = 100_000;
        let mean = (0..n).fold(Vector3::zeros(), |acc, _| acc + random_unit_vector(&mut rng)) / n as f64;
        assert!(mean.norm() < 0.02);
    }

    #[test]
    fn outside_points_clamp() {
        let l = FfdLattice::new(Aabb::cube(1.0), 3).unwrap();
        assert_eq!(l.local_coords(&Point3::new(5.0, -5.0, 0.0)), [1.0, 0.0, 0.5]);
        assert!(FfdLattice::new(Aabb::cube(1.0), 3).unwrap().perturbed(-1.0, 0).is_err());
    }
}
