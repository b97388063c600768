use nalgebra::{Point3, Vector3};

use super::OcclusionError;
use crate::geometry::{Aabb, TriangleMesh};

/// Ray parameters at or below this are ignored as self-intersections.
pub const T_EPSILON: f64 = 1e-9;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Point3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    /// Builds a ray; the direction is normalized.
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Result<Self, OcclusionError> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(OcclusionError::ZeroDirection);
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    pub fn origin(&self) -> &Point3<f64> {
        &self.origin
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    pub point: Point3<f64>,
}

/// Möller–Trumbore ray/triangle test. Returns the ray parameter of the hit.
pub fn intersect_triangle(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = ray.direction.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = ray.origin - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.direction.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > T_EPSILON).then_some(t)
}

fn closer(candidate: (f64, usize), best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((t, face)) => candidate.0 < t || (candidate.0 == t && candidate.1 < face),
    }
}

/// Nearest hit by testing every triangle.
pub fn nearest_hit_exhaustive(mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
    let mut best: Option<(f64, usize)> = None;
    for (face, tri) in mesh.triangles().enumerate() {
        if let Some(t) = intersect_triangle(ray, &tri) {
            if closer((t, face), best) {
                best = Some((t, face));
            }
        }
    }
    best.map(|(t, face)| Hit {
        t,
        face,
        point: ray.at(t),
    })
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: range into `faces`. Interior: `start` is the left child and
    /// `count` is zero; the right child immediately follows the left subtree.
    start: usize,
    count: usize,
    right: usize,
}

/// Bounding-volume hierarchy over the triangles of one mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<[Point3<f64>; 3]>,
    faces: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<_> = mesh.triangles().collect();
        let mut bvh = Self {
            faces: (0..triangles.len()).collect(),
            triangles,
            nodes: Vec::new(),
        };
        if !bvh.triangles.is_empty() {
            let centroids: Vec<Point3<f64>> = bvh
                .triangles
                .iter()
                .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
                .collect();
            bvh.build_node(0, bvh.faces.len(), &centroids);
        }
        bvh
    }

    fn tri_bounds(&self, face: usize) -> Aabb {
        Aabb::from_points(self.triangles[face].iter()).expect("triangle has vertices")
    }

    fn build_node(&mut self, start: usize, end: usize, centroids: &[Point3<f64>]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &f in &self.faces[start..end] {
            bounds = bounds.union(&self.tri_bounds(f));
            cbounds.grow(&centroids[f]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            start,
            count: end - start,
            right: 0,
        });
        let axis = cbounds.longest_axis();
        if end - start <= LEAF_SIZE || cbounds.extent()[axis] <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        self.faces[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid, centroids);
        let right = self.build_node(mid, end, centroids);
        self.nodes[id].start = left;
        self.nodes[id].count = 0;
        self.nodes[id].right = right;
        id
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Checks that every leaf box contains its triangles.
    pub fn leaves_contain_triangles(&self) -> bool {
        self.nodes.iter().filter(|n| n.count > 0).all(|n| {
            self.faces[n.start..n.start + n.count]
                .iter()
                .all(|&f| self.triangles[f].iter().all(|v| n.bounds.contains(v)))
        })
    }

    /// Nearest intersection along `ray`; equal distances resolve to the lower face index.
    pub fn nearest_hit(&self, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = ray.direction.map(|d| 1.0 / d);
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let limit = best.map_or(f64::INFINITY, |b| b.0);
            if !slab_test(&node.bounds, ray, &inv_dir, limit) {
                continue;
            }
            if node.count > 0 {
                for &face in &self.faces[node.start..node.start + node.count] {
                    if let Some(t) = intersect_triangle(ray, &self.triangles[face]) {
                        if closer((t, face), best) {
                            best = Some((t, face));
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.start);
            }
        }
        best.map(|(t, face)| Hit {
            t,
            face,
            point: ray.at(t),
        })
    }
}

fn slab_test(bb: &Aabb, ray: &Ray, inv_dir: &Vector3<f64>, limit: f64) -> bool {
    let mut tmin = 0.0f64;
    let mut tmax = limit;
    for a in 0..3 {
        let t1 = (bb.min[a] - ray.origin[a]) * inv_dir[a];
        let t2 = (bb.max[a] - ray.origin[a]) * inv_dir[a];
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        // NaN arises for rays parallel to a slab with the origin on its plane
        if !lo.is_nan() {
            tmin = tmin.max(lo);
        }
        if !hi.is_nan() {
            tmax = tmax.min(hi);
        }
        if tmin > tmax {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn ray_normalizes_direction() {
        let r = Ray::new(Point3::origin(), Vector3::new(3.0, 4.0, 0.0)).unwrap();
        assert!((r.direction().norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            Ray::new(Point3::origin(), Vector3::zeros()),
            Err(OcclusionError::ZeroDirection)
        );
    }

    #[test]
    fn triangle_hit_and_miss() {
        let tri = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let down = Ray::new(Point3::new(0.2, 0.2, 1.0), -Vector3::z()).unwrap();
        assert!((intersect_triangle(&down, &tri).unwrap() - 1.0).abs() < 1e-15);
        let miss = Ray::new(Point3::new(0.8, 0.8, 1.0), -Vector3::z()).unwrap();
        assert!(intersect_triangle(&miss, &tri).is_none());
        let behind = Ray::new(Point3::new(0.2, 0.2, 1.0), Vector3::z()).unwrap();
        assert!(intersect_triangle(&behind, &tri).is_none());
    }

    #[test]
    fn leaves_bound_their_triangles() {
        let mesh = synthetic::uv_sphere(16, 24);
        let bvh = Bvh::build(&mesh);
        assert_eq!(bvh.triangle_count(), mesh.faces().len());
        assert!(bvh.leaves_contain_triangles());
    }

    #[test]
    fn axis_parallel_rays_inside_box_planes() {
        let mesh = synthetic::cube();
        let bvh = Bvh::build(&mesh);
        // origin on the plane x = 0.5 of some internal boxes, direction along -z
        let ray = Ray::new(Point3::new(0.0, 0.0, 3.0), -Vector3::z()).unwrap();
        let a = bvh.nearest_hit(&ray).unwrap();
        let b = nearest_hit_exhaustive(&mesh, &ray).unwrap();
        assert_eq!((a.t, a.face), (b.t, b.face));
    }
}
