//! Point clouds, triangle meshes, bounding boxes and nearest-neighbor search.

mod cloud;
mod knn;
mod mesh;

pub use cloud::{Aabb, PointCloud};
pub use knn::{KnnIndex, Neighbor};
pub use mesh::{closest_point_on_triangle, point_triangle_distance, TriangleMesh};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("point cloud has zero extent")]
    DegenerateCloud,
    #[error("bounding box min exceeds max")]
    InvertedBounds,
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} repeats a vertex index")]
    RepeatedFaceIndex { face: usize },
    #[error("mesh has zero total surface area")]
    ZeroArea,
    #[error("sample count must be positive")]
    ZeroSampleCount,
    #[error("k = {k} exceeds the {n} indexed points")]
    KTooLarge { k: usize, n: usize },
}
