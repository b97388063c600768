//! Closed primitive meshes and a small labeled shape set for desk-scale
//! experiments.

use nalgebra::{Point3, Rotation3, Vector3};
use rand::Rng as _;

use crate::geometry::{PointCloud, TriangleMesh};
use crate::rng::keyed_rng;

pub const SHAPE_CLASSES: [&str; 4] = ["sphere", "cube", "pyramid", "cylinder"];

fn mesh(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, faces).expect("primitive meshes are well formed")
}

/// Axis-aligned cube `[-0.5, 0.5]^3`, outward-facing triangles.
pub fn cube() -> TriangleMesh {
    let v = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // z-
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y-
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x-
        [1, 3, 7, 5], // x+
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    mesh(v, faces)
}

/// Unit sphere tessellated by latitude/longitude.
pub fn uv_sphere(stacks: usize, slices: usize) -> TriangleMesh {
    let stacks = stacks.max(2);
    let slices = slices.max(3);
    let mut v = vec![Point3::new(0.0, 0.0, 1.0)];
    for i in 1..stacks {
        let theta = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
            v.push(Point3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    v.push(Point3::new(0.0, 0.0, -1.0));
    let south = (v.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + i * slices + j % slices) as u32;
    let mut f = Vec::new();
    for j in 0..slices {
        f.push([0, ring(0, j), ring(0, j + 1)]);
    }
    for i in 0..stacks - 2 {
        for j in 0..slices {
            f.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            f.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
        }
    }
    for j in 0..slices {
        f.push([south, ring(stacks - 2, j + 1), ring(stacks - 2, j)]);
    }
    mesh(v, f)
}

/// Square pyramid with base `[-0.5, 0.5]^2` at `z = -0.5` and apex at `z = 0.5`.
pub fn pyramid() -> TriangleMesh {
    let v = vec![
        Point3::new(-0.5, -0.5, -0.5),
        Point3::new(0.5, -0.5, -0.5),
        Point3::new(0.5, 0.5, -0.5),
        Point3::new(-0.5, 0.5, -0.5),
        Point3::new(0.0, 0.0, 0.5),
    ];
    let f = vec![[0, 2, 1], [0, 3, 2], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    mesh(v, f)
}

/// Capped cylinder of radius 0.5 spanning `z` in `[-0.5, 0.5]`.
pub fn cylinder(segments: usize) -> TriangleMesh {
    let n = segments.max(3);
    let mut v = Vec::with_capacity(2 * n + 2);
    for z in [-0.5, 0.5] {
        for j in 0..n {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            v.push(Point3::new(0.5 * phi.cos(), 0.5 * phi.sin(), z));
        }
    }
    let bottom = v.len() as u32;
    v.push(Point3::new(0.0, 0.0, -0.5));
    let top = v.len() as u32;
    v.push(Point3::new(0.0, 0.0, 0.5));
    let n32 = n as u32;
    let mut f = Vec::new();
    for j in 0..n32 {
        let k = (j + 1) % n32;
        f.push([j, k, n32 + k]);
        f.push([j, n32 + k, n32 + j]);
        f.push([bottom, k, j]);
        f.push([top, n32 + j, n32 + k]);
    }
    mesh(v, f)
}

pub fn primitive(class: usize) -> TriangleMesh {
    match class % SHAPE_CLASSES.len() {
        0 => uv_sphere(12, 24),
        1 => cube(),
        2 => pyramid(),
        _ => cylinder(24),
    }
}

/// One randomized instance of a primitive class.
#[derive(Debug, Clone)]
pub struct ShapeSample {
    pub label: usize,
    pub mesh: TriangleMesh,
    pub cloud: PointCloud,
}

/// Randomly stretched and spun primitive: per-axis scale in `[0.75, 1.25]`
/// and a rotation about `z`, sampled to `points` and normalized.
pub fn shape_sample(label: usize, points: usize, seed: u64, index: u64) -> ShapeSample {
    let mut rng = keyed_rng(&[seed, label as u64, index]);
    let scale = Vector3::new(
        rng.random_range(0.75..1.25),
        rng.random_range(0.75..1.25),
        rng.random_range(0.75..1.25),
    );
    let spin = Rotation3::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..std::f64::consts::TAU));
    let base = primitive(label);
    let verts = base
        .vertices()
        .iter()
        .map(|p| spin * Point3::from(p.coords.component_mul(&scale)))
        .collect();
    let raw = TriangleMesh::new(verts, base.faces().to_vec()).expect("same topology");
    let sampled = raw
        .sample_surface(points, rng.random())
        .expect("primitives have area");
    let (center, radius) = sampled.unit_sphere_transform().expect("non-degenerate");
    let mesh = raw.normalized_with(&center, radius);
    let cloud = sampled.map(|p| Point3::from((p - center) / radius));
    ShapeSample { label, mesh, cloud }
}

/// `per_class` samples of each primitive, interleaved by class.
pub fn shape_dataset(per_class: usize, points: usize, seed: u64) -> Vec<ShapeSample> {
    let mut out = Vec::with_capacity(per_class * SHAPE_CLASSES.len());
    for i in 0..per_class {
        for label in 0..SHAPE_CLASSES.len() {
            out.push(shape_sample(label, points, seed, i as u64));
        }
    }
    out
}

/// Writes `per_class` meshes of each class as `dir/<class>/<class>_<i>.off`.
pub fn write_mesh_dataset(dir: &std::path::Path, per_class: usize, seed: u64) -> std::io::Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for (label, name) in SHAPE_CLASSES.iter().enumerate() {
        let class_dir = dir.join(name);
        std::fs::create_dir_all(&class_dir)?;
        for i in 0..per_class {
            let s = shape_sample(label, 64, seed, i as u64);
            let path = class_dir.join(format!("{name}_{i:04}.off"));
            std::fs::write(&path, crate::io::write_off(&s.mesh))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
