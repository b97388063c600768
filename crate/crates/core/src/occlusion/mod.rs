//! Ray-cast visibility corruptions: single-view occlusion and LiDAR-style
//! line scans over the original mesh.

pub mod bvh;
pub mod scan;

pub use bvh::{intersect_triangle, nearest_hit_exhaustive, Bvh, Hit, Ray, T_EPSILON};
pub use scan::{
    camera_rays, lidar_scan, raycast_auto, raycast_visible, sensor_elevation, view_pose,
    AutoRayBudget, AutoScan, Camera, LidarConfig, LidarScan, ViewPose, VIEW_AZIMUTHS,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcclusionError {
    #[error("view index must be in 1..=5, got {0}")]
    ViewIndex(u8),
    #[error("azimuth {0} is not one of the five canonical views")]
    Azimuth(f64),
    #[error("elevation {0} outside 30..=60 degrees")]
    Elevation(f64),
    #[error("camera distance {0} must exceed the unit sphere")]
    Distance(f64),
    #[error("field of view {0} must be in (0, 180) degrees")]
    FieldOfView(f64),
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("at least one ray is required")]
    NoRays,
    #[error("LiDAR needs at least 2 beams, got {0}")]
    Beams(usize),
    #[error("no ray hit the mesh from this view")]
    DegenerateView,
}
