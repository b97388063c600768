use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

impl AsRef<[Point3<f64>]> for PointCloud {
    fn as_ref(&self) -> &[Point3<f64>] {
        &self.points
    }
}

/// An ordered set of 3D points in model units.
///
/// Every coordinate is finite. A cloud built through [`PointCloud::new`] is
/// nonempty; intermediate results inside the crate may be empty only
/// transiently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::NonFinite { index: i });
        }
        Ok(Self { points })
    }

    /// Builds a cloud from coordinate triples.
    pub fn from_xyz(xyz: &[[f64; 3]]) -> Result<Self, GeometryError> {
        Self::new(xyz.iter().map(|&[x, y, z]| Point3::new(x, y, z)).collect())
    }

    /// Wraps points produced by an operation that already preserves finiteness.
    pub(crate) fn from_points_unchecked(points: Vec<Point3<f64>>) -> Self {
        debug_assert!(points
            .iter()
            .all(|p| p.coords.iter().all(|c| c.is_finite())));
        Self { points }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.points).expect("cloud is nonempty")
    }

    /// Applies `f` to every point.
    pub fn map(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self::from_points_unchecked(self.points.iter().map(f).collect())
    }

    /// Centers the cloud at its centroid and scales it so the farthest point
    /// lies on the unit sphere.
    pub fn normalize_unit_sphere(&self) -> Result<Self, GeometryError> {
        let (center, scale) = self.unit_sphere_transform()?;
        Ok(self.map(|p| Point3::from((p - center) / scale)))
    }

    /// The `(center, radius)` pair used by [`Self::normalize_unit_sphere`].
    pub fn unit_sphere_transform(&self) -> Result<(Point3<f64>, f64), GeometryError> {
        let center = self.centroid();
        let radius = self
            .points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0f64, f64::max);
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::DegenerateCloud);
        }
        Ok((center, radius))
    }

    /// Coordinates flattened as `[x0, y0, z0, x1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// Axis-aligned bounding box with `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Result<Self, GeometryError> {
        if (0..3).any(|i| !(min[i] <= max[i])) {
            return Err(GeometryError::InvertedBounds);
        }
        Ok(Self { min, max })
    }

    /// The cube `[-h, h]^3`.
    pub fn cube(half_extent: f64) -> Self {
        Self {
            min: Point3::new(-half_extent, -half_extent, -half_extent),
            max: Point3::new(half_extent, half_extent, half_extent),
        }
    }

    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Option<Self> {
        let mut bb = Self::empty();
        let mut any = false;
        for p in points {
            bb.grow(p);
            any = true;
        }
        any.then_some(bb)
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }
}
