//! PLY point-cloud reading and writing.
//!
//! The reader understands ASCII and binary little-endian files with any mix
//! of scalar and list properties; only the `x`, `y`, `z` properties of the
//! `vertex` element are kept. The writer emits a single `vertex` element with
//! 32-bit float coordinates.

use std::fmt::Write as _;

use nalgebra::Point3;

use super::FormatError;
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    BinaryLittleEndian,
    Ascii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn header_err(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedHeader {
        line,
        reason: reason.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or(FormatError::Truncated {
            line: line_no,
            expected: "end_header",
        })?;
        line_no += 1;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| header_err(line_no, "non-UTF-8 header line"))?
            .trim_end_matches('\r')
            .trim();
        offset += nl + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(header_err(1, "missing ply magic"));
            }
            continue;
        }
        match fields.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match fields.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(header_err(line_no, format!("unsupported format {other:?}")))
                    }
                });
            }
            Some("element") => {
                if fields.len() != 3 {
                    return Err(header_err(line_no, "element needs a name and a count"));
                }
                let count = fields[2]
                    .parse()
                    .map_err(|_| header_err(line_no, format!("invalid count {:?}", fields[2])))?;
                elements.push(Element {
                    name: fields[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element"))?;
                let prop = if fields.get(1) == Some(&"list") {
                    if fields.len() != 5 {
                        return Err(header_err(line_no, "malformed list property"));
                    }
                    let count = Scalar::parse(fields[2])
                        .ok_or_else(|| header_err(line_no, "unknown list count type"))?;
                    let item = Scalar::parse(fields[3])
                        .ok_or_else(|| header_err(line_no, "unknown list item type"))?;
                    Property::List { count, item }
                } else {
                    if fields.len() != 3 {
                        return Err(header_err(line_no, "malformed property"));
                    }
                    let ty = Scalar::parse(fields[1])
                        .ok_or_else(|| header_err(line_no, format!("unknown type {:?}", fields[1])))?;
                    Property::Scalar {
                        name: fields[2].to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(header_err(line_no, format!("unexpected keyword {other:?}"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| header_err(line_no, "missing format line"))?,
        elements,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

fn xyz_slots(element: &Element, line: usize) -> Result<[usize; 3], FormatError> {
    let find = |axis: &str| {
        element
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
            .ok_or_else(|| header_err(line, format!("vertex element lacks property {axis}")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

/// Reads the vertex positions of a PLY file.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err(header.body_line - 1, "no vertex element"))?;
    let slots = xyz_slots(&header.elements[vertex_pos], header.body_line - 1)?;
    let body = &bytes[header.body_offset..];
    let points = match header.encoding {
        PlyEncoding::Ascii => read_ascii_body(body, &header, vertex_pos, slots)?,
        PlyEncoding::BinaryLittleEndian => read_binary_body(body, &header, vertex_pos, slots)?,
    };
    PointCloud::new(points).map_err(FormatError::Geometry)
}

fn read_ascii_body(
    body: &[u8],
    header: &Header,
    vertex_pos: usize,
    slots: [usize; 3],
) -> Result<Vec<Point3<f64>>, FormatError> {
    let text = std::str::from_utf8(body).map_err(|_| FormatError::InvalidNumber {
        line: header.body_line,
        token: "<non-UTF-8 body>".into(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut points = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        for _ in 0..element.count {
            let (i, line) = lines.next().ok_or(FormatError::Truncated {
                line: header.body_line + text.lines().count(),
                expected: "element row",
            })?;
            let line_no = header.body_line + i;
            if ei != vertex_pos {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let mut values = Vec::new();
            for prop in &element.properties {
                let mut take = || -> Result<f64, FormatError> {
                    let tok = tokens.next().ok_or(FormatError::Truncated {
                        line: line_no,
                        expected: "property value",
                    })?;
                    tok.parse::<f64>().map_err(|_| FormatError::InvalidNumber {
                        line: line_no,
                        token: tok.to_string(),
                    })
                };
                match prop {
                    Property::Scalar { ty, .. } => {
                        let v = take()?;
                        values.push(if *ty == Scalar::F32 { v as f32 as f64 } else { v });
                    }
                    Property::List { .. } => {
                        let n = take()? as usize;
                        for _ in 0..n {
                            take()?;
                        }
                        values.push(f64::NAN);
                    }
                }
            }
            points.push(Point3::new(values[slots[0]], values[slots[1]], values[slots[2]]));
        }
    }
    Ok(points)
}

fn read_binary_body(
    body: &[u8],
    header: &Header,
    vertex_pos: usize,
    slots: [usize; 3],
) -> Result<Vec<Point3<f64>>, FormatError> {
    let mut cursor = 0usize;
    let truncated = || FormatError::Truncated {
        line: header.body_line,
        expected: "binary element data",
    };
    let mut take = |n: usize| -> Result<&[u8], FormatError> {
        let end = cursor.checked_add(n).filter(|&e| e <= body.len()).ok_or_else(truncated)?;
        let s = &body[cursor..end];
        cursor = end;
        Ok(s)
    };
    let mut points = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        for _ in 0..element.count {
            let mut xyz = [0.0f64; 3];
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let v = ty.read_le(take(ty.size())?);
                        if let Some(axis) = slots.iter().position(|&s| s == pi) {
                            xyz[axis] = v;
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.read_le(take(count.size())?) as usize;
                        take(n * item.size())?;
                    }
                }
            }
            if ei == vertex_pos {
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    Ok(points)
}

/// Serializes a cloud as PLY with float32 coordinates.
pub fn write_ply(cloud: &PointCloud, encoding: PlyEncoding) -> Vec<u8> {
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {}", cloud.len());
    header.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    let mut out = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::with_capacity(cloud.len() * 32);
            for p in cloud.points() {
                let _ = writeln!(body, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            out.reserve(cloud.len() * 12);
            for p in cloud.points() {
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
    }
    out
}
