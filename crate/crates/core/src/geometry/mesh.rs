use nalgebra::{Point3, Vector3};
use rand::Rng as _;

use super::{GeometryError, PointCloud};
use crate::rng::rng_from_seed;

/// Triangle soup with indexed vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if let Some(i) = vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::NonFinite { index: i });
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v as usize >= vertices.len()) {
                return Err(GeometryError::FaceIndexOutOfRange {
                    face: fi,
                    index: bad as usize,
                    vertex_count: vertices.len(),
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::RepeatedFaceIndex { face: fi });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Point3<f64>; 3]> + '_ {
        (0..self.faces.len()).map(|i| self.triangle(i))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Applies an affine map `p -> (p - center) / scale` to every vertex.
    pub fn normalized_with(&self, center: &Point3<f64>, scale: f64) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point3::from((p - center) / scale))
                .collect(),
            faces: self.faces.clone(),
        }
    }

    /// Area-weighted uniform sampling of `n` surface points.
    ///
    /// Zero-area faces get zero weight.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<PointCloud, GeometryError> {
        Ok(self.sample_surface_with_faces(n, seed)?.0)
    }

    /// Same as [`Self::sample_surface`] and also returns the chosen face per point.
    pub fn sample_surface_with_faces(
        &self,
        n: usize,
        seed: u64,
    ) -> Result<(PointCloud, Vec<usize>), GeometryError> {
        if n == 0 {
            return Err(GeometryError::ZeroSampleCount);
        }
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for i in 0..self.faces.len() {
            total += self.face_area(i);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(GeometryError::ZeroArea);
        }
        let mut rng = rng_from_seed(seed);
        let mut points = Vec::with_capacity(n);
        let mut chosen = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.random::<f64>() * total;
            // first face whose cumulative area exceeds the target; zero-area
            // faces never satisfy the strict inequality ahead of their neighbor
            let mut face = cumulative.partition_point(|&c| c <= target);
            if face >= cumulative.len() {
                face = cumulative.len() - 1;
                while self.face_area(face) == 0.0 {
                    face -= 1;
                }
            }
            let [a, b, c] = self.triangle(face);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            points.push(a + (b - a) * u + (c - a) * v);
            chosen.push(face);
        }
        Ok((PointCloud::from_points_unchecked(points), chosen))
    }

    /// Euclidean distance from `p` to the closest point of the surface.
    pub fn distance_to_surface(&self, p: &Point3<f64>) -> f64 {
        self.triangles()
            .map(|[a, b, c]| point_triangle_distance(p, &a, &b, &c))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Distance from `p` to triangle `abc` (Ericson's closest-point construction).
pub fn point_triangle_distance(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab: Vector3<f64> = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn samples_lie_on_triangle_plane() {
        let cloud = right_triangle().sample_surface(1000, 11).unwrap();
        assert_eq!(cloud.len(), 1000);
        for p in cloud.points() {
            assert!(p.z.abs() <= 1e-12);
            assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.x + p.y <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = right_triangle();
        let a = m.sample_surface(256, 99).unwrap();
        let b = m.sample_surface(256, 99).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
    }

    #[test]
    fn face_choice_follows_area_ratio() {
        // areas 4.5 and 0.5: ratio 9:1
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(3.0, 0.0, 0.0),
                Point3::new(0.0, 3.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
                Point3::new(1.0, 0.0, 1.0),
                Point3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let n = 10_000usize;
        let (_, faces) = mesh.sample_surface_with_faces(n, 5).unwrap();
        let big = faces.iter().filter(|&&f| f == 0).count() as f64;
        // binomial oracle: mean n p, sd sqrt(n p (1-p))
        let p = 0.9;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((big - mean).abs() <= 3.0 * sd, "big-face count {big}");
    }

    #[test]
    fn zero_area_faces_are_skipped() {
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3], [1, 2, 0]],
        )
        .unwrap();
        let (_, faces) = mesh.sample_surface_with_faces(2000, 1).unwrap();
        assert!(faces.iter().all(|&f| f == 1));
    }

    #[test]
    fn zero_total_area_is_an_error() {
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(mesh.sample_surface(10, 0), Err(GeometryError::ZeroArea));
    }

    #[test]
    fn invalid_faces_rejected() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 99]]),
            Err(GeometryError::FaceIndexOutOfRange { index: 99, .. })
        ));
        assert!(matches!(
            TriangleMesh::new(v, vec![[0, 1, 1]]),
            Err(GeometryError::RepeatedFaceIndex { face: 0 })
        ));
    }

    #[test]
    fn closest_point_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let d = |p: Point3<f64>| point_triangle_distance(&p, &a, &b, &c);
        assert!((d(Point3::new(0.2, 0.2, 2.0)) - 2.0).abs() < 1e-15);
        assert!((d(Point3::new(-1.0, -1.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
        assert!((d(Point3::new(1.0, 1.0, 0.0)) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((d(Point3::new(0.5, -2.0, 0.0)) - 2.0).abs() < 1e-15);
    }
}
