//! Single-view visibility scans: a pinhole camera grid and a line-structured
//! LiDAR pattern. Both keep only the nearest surface hit per ray.

use nalgebra::{Point3, Vector3};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::{Bvh, Ray};
use super::OcclusionError;
use crate::geometry::{PointCloud, TriangleMesh};
use crate::rng::rng_from_seed;

/// Azimuths of the five canonical views, in degrees.
pub const VIEW_AZIMUTHS: [f64; 5] = [0.0, 72.0, 144.0, 216.0, 288.0];
pub const MIN_ELEVATION: f64 = 30.0;
pub const MAX_ELEVATION: f64 = 60.0;
pub const DEFAULT_DISTANCE: f64 = 2.5;
pub const DEFAULT_FOV: f64 = 50.0;

/// Sensor placement looking at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub distance: f64,
}

impl ViewPose {
    pub fn new(azimuth_deg: f64, elevation_deg: f64, distance: f64) -> Result<Self, OcclusionError> {
        if !VIEW_AZIMUTHS.contains(&azimuth_deg) {
            return Err(OcclusionError::Azimuth(azimuth_deg));
        }
        if !(MIN_ELEVATION..=MAX_ELEVATION).contains(&elevation_deg) {
            return Err(OcclusionError::Elevation(elevation_deg));
        }
        if !(distance > 1.0) || !distance.is_finite() {
            return Err(OcclusionError::Distance(distance));
        }
        Ok(Self {
            azimuth_deg,
            elevation_deg,
            distance,
        })
    }

    /// The pose for view `index` in `1..=5` with a seeded elevation draw.
    pub fn for_view(index: u8, seed: u64) -> Result<Self, OcclusionError> {
        if !(1..=5).contains(&index) {
            return Err(OcclusionError::ViewIndex(index));
        }
        let elevation = rng_from_seed(seed).random_range(MIN_ELEVATION..=MAX_ELEVATION);
        Self::new(VIEW_AZIMUTHS[index as usize - 1], elevation, DEFAULT_DISTANCE)
    }

    pub fn with_distance(mut self, distance: f64) -> Result<Self, OcclusionError> {
        if !(distance > 1.0) || !distance.is_finite() {
            return Err(OcclusionError::Distance(distance));
        }
        self.distance = distance;
        Ok(self)
    }

    pub fn position(&self) -> Point3<f64> {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        Point3::new(
            self.distance * el.cos() * az.cos(),
            self.distance * el.cos() * az.sin(),
            self.distance * el.sin(),
        )
    }

    /// Orthonormal `(forward, right, up)` frame with forward toward the origin.
    pub fn frame(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let forward = -self.position().coords.normalize();
        let right = forward.cross(&Vector3::z()).normalize();
        let up = right.cross(&forward);
        (forward, right, up)
    }
}

/// Convenience wrapper matching [`ViewPose::for_view`].
pub fn view_pose(index: u8, seed: u64) -> Result<ViewPose, OcclusionError> {
    ViewPose::for_view(index, seed)
}

/// Camera projection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fov_deg: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fov_deg: DEFAULT_FOV,
        }
    }
}

fn check_fov(fov: f64) -> Result<(), OcclusionError> {
    if !(fov > 0.0 && fov < 180.0) {
        return Err(OcclusionError::FieldOfView(fov));
    }
    Ok(())
}

/// Rays of a `grid x grid` pinhole image in row-major order.
pub fn camera_rays(pose: &ViewPose, camera: &Camera, grid: usize) -> Result<Vec<Ray>, OcclusionError> {
    check_fov(camera.fov_deg)?;
    let (forward, right, up) = pose.frame();
    let half = (camera.fov_deg.to_radians() / 2.0).tan();
    let origin = pose.position();
    let mut rays = Vec::with_capacity(grid * grid);
    for row in 0..grid {
        let y = (1.0 - 2.0 * (row as f64 + 0.5) / grid as f64) * half;
        for col in 0..grid {
            let x = (2.0 * (col as f64 + 0.5) / grid as f64 - 1.0) * half;
            rays.push(Ray::new(origin, forward + right * x + up * y)?);
        }
    }
    Ok(rays)
}

fn cast_all(bvh: &Bvh, rays: &[Ray]) -> Vec<Option<Point3<f64>>> {
    // collect preserves ray order regardless of scheduling
    rays.par_iter()
        .map(|r| bvh.nearest_hit(r).map(|h| h.point))
        .collect()
}

/// Nearest visible surface point for each ray of a `ceil(sqrt(n_rays))^2` grid.
pub fn raycast_visible(
    mesh: &TriangleMesh,
    pose: &ViewPose,
    camera: &Camera,
    n_rays: usize,
) -> Result<PointCloud, OcclusionError> {
    let bvh = Bvh::build(mesh);
    raycast_grid(&bvh, pose, camera, grid_side(n_rays)?)
}

fn grid_side(n_rays: usize) -> Result<usize, OcclusionError> {
    if n_rays == 0 {
        return Err(OcclusionError::NoRays);
    }
    let mut g = (n_rays as f64).sqrt().ceil() as usize;
    while g * g < n_rays {
        g += 1;
    }
    while g > 1 && (g - 1) * (g - 1) >= n_rays {
        g -= 1;
    }
    Ok(g)
}

fn raycast_grid(bvh: &Bvh, pose: &ViewPose, camera: &Camera, grid: usize) -> Result<PointCloud, OcclusionError> {
    let rays = camera_rays(pose, camera, grid)?;
    let hits: Vec<Point3<f64>> = cast_all(bvh, &rays).into_iter().flatten().collect();
    if hits.is_empty() {
        return Err(OcclusionError::DegenerateView);
    }
    Ok(PointCloud::from_points_unchecked(hits))
}

/// Target window and search budget for [`raycast_auto`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoRayBudget {
    pub initial_grid: usize,
    pub min_points: usize,
    pub max_points: usize,
    pub max_iterations: usize,
}

impl Default for AutoRayBudget {
    fn default() -> Self {
        Self {
            initial_grid: 96,
            min_points: 768,
            max_points: 1280,
            max_iterations: 6,
        }
    }
}

/// Result of an auto-scaled visibility scan.
#[derive(Debug, Clone)]
pub struct AutoScan {
    pub cloud: PointCloud,
    pub grid: usize,
}

/// Visibility scan whose grid is bisected until the hit count lands inside
/// the budget window or the iteration budget runs out. When no grid lands in
/// the window, the grid whose count is closest to the window center wins.
pub fn raycast_auto(
    mesh: &TriangleMesh,
    pose: &ViewPose,
    camera: &Camera,
    budget: &AutoRayBudget,
) -> Result<AutoScan, OcclusionError> {
    let bvh = Bvh::build(mesh);
    let target = (budget.min_points + budget.max_points) as f64 / 2.0;
    let mut grid = budget.initial_grid.max(2);
    let mut lo: Option<usize> = None;
    let mut hi: Option<usize> = None;
    let mut best: Option<(f64, AutoScan)> = None;
    for _ in 0..budget.max_iterations.max(1) {
        let cloud = match raycast_grid(&bvh, pose, camera, grid) {
            Ok(c) => c,
            Err(OcclusionError::DegenerateView) => {
                lo = Some(grid);
                grid = hi.map_or(grid * 2, |h| (grid + h) / 2);
                continue;
            }
            Err(e) => return Err(e),
        };
        let n = cloud.len();
        let score = (n as f64 - target).abs();
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, AutoScan { cloud, grid }));
        }
        if (budget.min_points..=budget.max_points).contains(&n) {
            break;
        }
        let next = if n < budget.min_points {
            lo = Some(grid);
            hi.map_or(grid * 2, |h| (grid + h) / 2)
        } else {
            hi = Some(grid);
            lo.map_or(grid / 2, |l| (grid + l) / 2)
        };
        if next == grid || next < 2 {
            break;
        }
        grid = next;
    }
    best.map(|(_, s)| s).ok_or(OcclusionError::DegenerateView)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub beams: usize,
    pub azimuth_steps: usize,
    pub vertical_fov_deg: f64,
    pub horizontal_fov_deg: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 32,
            azimuth_steps: 512,
            vertical_fov_deg: DEFAULT_FOV,
            horizontal_fov_deg: DEFAULT_FOV,
        }
    }
}

/// LiDAR output: hit points plus the beam that produced each one.
#[derive(Debug, Clone)]
pub struct LidarScan {
    pub cloud: PointCloud,
    pub beams: Vec<usize>,
    /// Beam elevation angles in radians, sensor frame.
    pub beam_elevations: Vec<f64>,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Direction of beam `elevation` at in-plane angle `azimuth` (radians).
///
/// Each beam sweeps a plane through the sensor, so every return of one beam
/// has the same elevation `atan2(up, forward)` in the sensor frame.
fn beam_direction(frame: &(Vector3<f64>, Vector3<f64>, Vector3<f64>), elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (forward, right, up) = frame;
    let tilt = forward * elevation.cos() + up * elevation.sin();
    tilt * azimuth.cos() + right * azimuth.sin()
}

/// Multi-beam line scan from `pose`; output is ordered beam-major.
pub fn lidar_scan(mesh: &TriangleMesh, pose: &ViewPose, config: &LidarConfig) -> Result<LidarScan, OcclusionError> {
    if config.beams < 2 {
        return Err(OcclusionError::Beams(config.beams));
    }
    if config.azimuth_steps == 0 {
        return Err(OcclusionError::NoRays);
    }
    check_fov(config.vertical_fov_deg)?;
    check_fov(config.horizontal_fov_deg)?;
    let frame = pose.frame();
    let origin = pose.position();
    let vfov = config.vertical_fov_deg.to_radians();
    let hfov = config.horizontal_fov_deg.to_radians();
    let elevations: Vec<f64> = (0..config.beams)
        .map(|b| -vfov / 2.0 + vfov * b as f64 / (config.beams - 1) as f64)
        .collect();
    let mut rays = Vec::with_capacity(config.beams * config.azimuth_steps);
    for &el in &elevations {
        for a in 0..config.azimuth_steps {
            let az = -hfov / 2.0 + hfov * (a as f64 + 0.5) / config.azimuth_steps as f64;
            rays.push(Ray::new(origin, beam_direction(&frame, el, az))?);
        }
    }
    let bvh = Bvh::build(mesh);
    let hits = cast_all(&bvh, &rays);
    let mut points = Vec::new();
    let mut beams = Vec::new();
    for (i, hit) in hits.into_iter().enumerate() {
        if let Some(p) = hit {
            points.push(p);
            beams.push(i / config.azimuth_steps);
        }
    }
    if points.is_empty() {
        return Err(OcclusionError::DegenerateView);
    }
    Ok(LidarScan {
        cloud: PointCloud::from_points_unchecked(points),
        beams,
        beam_elevations: elevations,
    })
}

/// Sensor-frame elevation `atan2(up, forward)` of `p` seen from `pose`.
pub fn sensor_elevation(pose: &ViewPose, p: &Point3<f64>) -> f64 {
    let (forward, _, up) = pose.frame();
    let rel = p - pose.position();
    rel.dot(&up).atan2(rel.dot(&forward))
}
