//! OFF mesh reading and writing.
//!
//! Accepts the ModelNet40 variant where the element counts are fused onto the
//! magic line (`OFF492 306 0`). Polygons with more than three corners are
//! fan-triangulated from their first corner.

use std::fmt::Write as _;

use nalgebra::Point3;

use super::FormatError;
use crate::geometry::TriangleMesh;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank, non-comment line with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }
}

fn parse_counts(line_no: usize, fields: &[&str]) -> Result<(usize, usize), FormatError> {
    if fields.len() < 2 {
        return Err(FormatError::MalformedHeader {
            line: line_no,
            reason: "expected vertex and face counts".into(),
        });
    }
    let parse = |s: &str| {
        s.parse::<usize>().map_err(|_| FormatError::MalformedHeader {
            line: line_no,
            reason: format!("invalid count {s:?}"),
        })
    };
    Ok((parse(fields[0])?, parse(fields[1])?))
}

/// Parses OFF text into a triangle mesh.
pub fn parse_off(bytes: &[u8]) -> Result<TriangleMesh, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::MalformedHeader {
        line: 1,
        reason: "file is not valid UTF-8 text".into(),
    })?;
    let mut lines = Lines::new(text);
    let (line_no, first) = lines.next_content().ok_or(FormatError::Truncated {
        line: 0,
        expected: "OFF header",
    })?;
    let rest = first.strip_prefix("OFF").ok_or_else(|| FormatError::MalformedHeader {
        line: line_no,
        reason: "missing OFF magic".into(),
    })?;
    let fused: Vec<&str> = rest.split_whitespace().collect();
    let (n_vertices, n_faces) = if fused.is_empty() {
        let (count_line, counts) = lines.next_content().ok_or(FormatError::Truncated {
            line: line_no,
            expected: "element counts",
        })?;
        parse_counts(count_line, &counts.split_whitespace().collect::<Vec<_>>())?
    } else {
        parse_counts(line_no, &fused)?
    };

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (ln, line) = lines.next_content().ok_or(FormatError::Truncated {
            line: lines.last,
            expected: "vertex line",
        })?;
        let mut coords = [0.0f64; 3];
        let mut fields = line.split_whitespace();
        for c in &mut coords {
            let tok = fields.next().ok_or(FormatError::InvalidNumber {
                line: ln,
                token: String::new(),
            })?;
            *c = tok.parse().map_err(|_| FormatError::InvalidNumber {
                line: ln,
                token: tok.to_string(),
            })?;
            if !c.is_finite() {
                return Err(FormatError::InvalidNumber {
                    line: ln,
                    token: tok.to_string(),
                });
            }
        }
        vertices.push(Point3::new(coords[0], coords[1], coords[2]));
    }

    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (ln, line) = lines.next_content().ok_or(FormatError::Truncated {
            line: lines.last,
            expected: "face line",
        })?;
        let mut fields = line.split_whitespace();
        let parse_int = |tok: Option<&str>| -> Result<usize, FormatError> {
            let tok = tok.ok_or(FormatError::InvalidNumber {
                line: ln,
                token: String::new(),
            })?;
            tok.parse().map_err(|_| FormatError::InvalidNumber {
                line: ln,
                token: tok.to_string(),
            })
        };
        let corners = parse_int(fields.next())?;
        if corners < 3 {
            return Err(FormatError::MalformedFace {
                line: ln,
                reason: format!("polygon with {corners} corners"),
            });
        }
        let mut idx = Vec::with_capacity(corners);
        for _ in 0..corners {
            let v = parse_int(fields.next())?;
            if v >= n_vertices {
                return Err(FormatError::IndexOutOfRange {
                    line: ln,
                    index: v,
                    vertex_count: n_vertices,
                });
            }
            idx.push(v as u32);
        }
        for i in 1..corners - 1 {
            let tri = [idx[0], idx[i], idx[i + 1]];
            // collapsed corners carry no surface
            if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                faces.push(tri);
            }
        }
    }

    TriangleMesh::new(vertices, faces).map_err(FormatError::Geometry)
}

/// Serializes a mesh as OFF text with shortest round-trip float formatting.
pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}
