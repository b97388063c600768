//! Header-less little-endian float32 triples.

use nalgebra::Point3;

use super::FormatError;
use crate::geometry::PointCloud;

pub fn read_raw(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    if bytes.len() % 12 != 0 {
        return Err(FormatError::RawLength { len: bytes.len() });
    }
    let points = bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap()) as f64;
            Point3::new(f(0), f(4), f(8))
        })
        .collect();
    PointCloud::new(points).map_err(FormatError::Geometry)
}

pub fn write_raw(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 12);
    for p in cloud.points() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn length_must_be_multiple_of_twelve() {
        assert_eq!(read_raw(&[0u8; 13]), Err(FormatError::RawLength { len: 13 }));
        assert!(matches!(read_raw(&[]), Err(FormatError::Geometry(_))));
    }

    proptest! {
        #[test]
        fn f32_values_survive(xyz in prop::collection::vec(prop::array::uniform3(-10.0f32..10.0), 1..64)) {
            let cloud = PointCloud::from_xyz(
                &xyz.iter().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect::<Vec<_>>(),
            ).unwrap();
            prop_assert_eq!(read_raw(&write_raw(&cloud)).unwrap(), cloud);
        }
    }
}
