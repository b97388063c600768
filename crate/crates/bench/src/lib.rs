//! Shared inputs for the toolkit benchmarks.

use nalgebra::{Point3, Vector3};
use pccorrupt::augment::LabeledCloud;
use pccorrupt::geometry::{PointCloud, TriangleMesh};
use pccorrupt::occlusion::Ray;
use pccorrupt::synthetic::{shape_sample, uv_sphere};

/// A normalized sample cloud of the given class and size.
pub fn cloud(class: usize, points: usize) -> PointCloud {
    shape_sample(class, points, 1, 0).cloud
}

/// A normalized sample mesh of the given class.
pub fn mesh(class: usize) -> TriangleMesh {
    shape_sample(class, 256, 1, 0).mesh
}

/// A UV sphere with roughly `faces` triangles.
pub fn sphere(faces: usize) -> TriangleMesh {
    let stacks = ((faces as f64 / 4.0).sqrt().round() as usize + 1).max(3);
    uv_sphere(stacks, 2 * stacks)
}

/// `n` rays from a ring of radius 3 aimed near the origin.
pub fn rays(n: usize) -> Vec<Ray> {
    (0..n)
        .map(|i| {
            let a = i as f64 * 0.618_033_988_75 * std::f64::consts::TAU;
            let origin = Point3::new(3.0 * a.cos(), 3.0 * a.sin(), 0.5 * ((i % 7) as f64 - 3.0) / 3.0);
            let target = Vector3::new(0.3 * (i as f64 * 1.3).sin(), 0.3 * (i as f64 * 0.7).cos(), 0.0);
            Ray::new(origin, target - origin.coords).expect("nonzero direction")
        })
        .collect()
}

/// Labeled clouds cycling through the four synthetic classes.
pub fn batch(n: usize, points: usize) -> Vec<LabeledCloud> {
    (0..n)
        .map(|i| {
            let s = shape_sample(i % 4, points, 2, i as u64);
            LabeledCloud::one_hot(s.cloud, s.label, 4).expect("valid label")
        })
        .collect()
}
