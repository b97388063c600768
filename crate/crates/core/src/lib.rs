//! Corruption-robustness toolkit for 3D point-cloud recognition.
//!
//! The crate generates fifteen corruption families at five severities from
//! meshes and point clouds, implements the mixing augmentations used to
//! train robust classifiers, ships a small max-pool point classifier with
//! analytic gradients (for the point-shifting PGD attack and batch-norm
//! test-time adaptation), and computes error-rate metrics from prediction
//! files.

pub mod augment;
pub mod corruption;
pub mod deform;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod occlusion;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use corruption::{CorruptionKind, CorruptionSpec, SeverityTable};
pub use geometry::{Aabb, KnnIndex, PointCloud, TriangleMesh};
pub use metrics::{MetricsReport, PredictionRecord};
pub use nn::NetworkState;
