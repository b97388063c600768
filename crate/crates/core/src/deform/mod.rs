//! Non-linear deformation corruptions: free-form deformation and RBF
//! interpolation with multi-quadric and inverse multi-quadric kernels.

pub mod ffd;
pub mod rbf;

pub use ffd::{bernstein_basis, FfdLattice};
pub use rbf::{KernelVariant, RbfDeformation, RbfKernel};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeformError {
    #[error("lattice resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("lattice bounds have zero extent along some axis")]
    DegenerateBounds,
    #[error("deformation distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("RBF shape parameter must be positive, got {0}")]
    ShapeParameter(f64),
    #[error("RBF interpolation needs at least one center")]
    NoCenters,
    #[error("{centers} centers but {displacements} displacements")]
    LengthMismatch { centers: usize, displacements: usize },
    #[error("centers {first} and {second} coincide")]
    DuplicateCenter { first: usize, second: usize },
    #[error("interpolation system is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },
}
