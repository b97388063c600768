//! Mesh and point-cloud file formats: OFF meshes, PLY clouds and raw float32 triples.

mod off;
mod ply;
mod raw;

pub use off::{parse_off, write_off};
pub use ply::{read_ply, write_ply, PlyEncoding};
pub use raw::{read_raw, write_raw};

use std::path::Path;

use thiserror::Error;

use crate::geometry::{GeometryError, PointCloud, TriangleMesh};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: invalid number {token:?}")]
    InvalidNumber { line: usize, token: String },
    #[error("line {line}: face references vertex {index} of {vertex_count}")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("line {line}: malformed face: {reason}")]
    MalformedFace { line: usize, reason: String },
    #[error("truncated file after line {line}: expected {expected}")]
    Truncated { line: usize, expected: &'static str },
    #[error("raw cloud length {len} is not a multiple of 12 bytes")]
    RawLength { len: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Input shapes recognized by file extension.
#[derive(Debug, Clone)]
pub enum Shape {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: String, source: FormatError },
    #[error("{path}: unsupported extension (expected .off, .ply or .bin)")]
    UnknownExtension { path: String },
}

/// Whether `path` has an extension this crate can load.
pub fn is_supported(path: &Path) -> bool {
    matches!(extension(path).as_deref(), Some("off" | "ply" | "bin" | "raw"))
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Loads an OFF mesh, a PLY cloud, or a raw `.bin`/`.raw` cloud.
pub fn load_shape(path: &Path) -> Result<Shape, LoadError> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: display.clone(),
        source,
    })?;
    let wrap = |source| LoadError::Format {
        path: display.clone(),
        source,
    };
    match extension(path).as_deref() {
        Some("off") => parse_off(&bytes).map(Shape::Mesh).map_err(wrap),
        Some("ply") => read_ply(&bytes).map(Shape::Cloud).map_err(wrap),
        Some("bin" | "raw") => read_raw(&bytes).map(Shape::Cloud).map_err(wrap),
        _ => Err(LoadError::UnknownExtension { path: display }),
    }
}
