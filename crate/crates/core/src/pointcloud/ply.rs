//! The PLY subset used for test content: one `vertex` element carrying
//! `x, y, z` and `red, green, blue`, stored as ASCII or binary little-endian.

use std::fmt::Write as _;

use super::{CloudError, PointCloud, Position, Result, Rgb};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Scalar> {
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

const REQUIRED: [&str; 6] = ["x", "y", "z", "red", "green", "blue"];

struct Header {
    format: PlyFormat,
    count: usize,
    /// Column of each required property within a vertex record.
    columns: [usize; 6],
    record_types: Vec<Scalar>,
    body_offset: usize,
}

fn malformed(msg: impl Into<String>) -> CloudError {
    CloudError::MalformedHeader(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| malformed("no end_header line"))?;
    let mut body_offset = end + END.len();
    match bytes.get(body_offset) {
        Some(b'\r') if bytes.get(body_offset + 1) == Some(&b'\n') => body_offset += 2,
        Some(b'\n') => body_offset += 1,
        None => {}
        Some(_) => return Err(malformed("end_header not followed by a newline")),
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed("header is not ASCII"))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(malformed("missing `ply` magic line"));
    }

    let mut format = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "comment" | "obj_info" => {}
            "format" => {
                if tokens.len() != 3 {
                    return Err(malformed(format!("bad format line `{line}`")));
                }
                format = Some(match tokens[1] {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLe,
                    other => {
                        return Err(CloudError::Unsupported {
                            kind: "format",
                            name: other.to_string(),
                        })
                    }
                });
            }
            "element" => {
                if tokens.len() != 3 {
                    return Err(malformed(format!("bad element line `{line}`")));
                }
                if tokens[1] != "vertex" {
                    return Err(CloudError::Unsupported {
                        kind: "element",
                        name: tokens[1].to_string(),
                    });
                }
                if count.is_some() {
                    return Err(malformed("vertex element declared twice"));
                }
                count = Some(
                    tokens[2]
                        .parse::<usize>()
                        .map_err(|_| malformed(format!("bad vertex count `{}`", tokens[2])))?,
                );
            }
            "property" => {
                if count.is_none() {
                    return Err(malformed("property before element"));
                }
                if tokens.get(1) == Some(&"list") {
                    return Err(CloudError::Unsupported {
                        kind: "property",
                        name: line.to_string(),
                    });
                }
                if tokens.len() != 3 {
                    return Err(malformed(format!("bad property line `{line}`")));
                }
                let ty = Scalar::parse(tokens[1]).ok_or_else(|| malformed(format!("unknown type `{}`", tokens[1])))?;
                let name = tokens[2];
                if !REQUIRED.contains(&name) {
                    return Err(CloudError::Unsupported {
                        kind: "property",
                        name: name.to_string(),
                    });
                }
                if props.iter().any(|(n, _)| n == name) {
                    return Err(malformed(format!("property `{name}` declared twice")));
                }
                props.push((name.to_string(), ty));
            }
            other => return Err(malformed(format!("unexpected keyword `{other}`"))),
        }
    }

    let format = format.ok_or_else(|| malformed("missing format line"))?;
    let count = count.ok_or_else(|| malformed("missing `element vertex` line"))?;
    let mut columns = [0; 6];
    for (k, &name) in REQUIRED.iter().enumerate() {
        let col = props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or(CloudError::MissingProperty(name))?;
        let ty = props[col].1;
        if k >= 3 && ty != Scalar::U8 {
            return Err(CloudError::Unsupported {
                kind: "color type",
                name: format!("{name}: {ty:?}"),
            });
        }
        columns[k] = col;
    }
    Ok(Header {
        format,
        count,
        columns,
        record_types: props.iter().map(|(_, t)| *t).collect(),
        body_offset,
    })
}

fn to_coord(v: f64, vertex: usize) -> Result<u32> {
    if !v.is_finite() {
        return Err(CloudError::InvalidValue {
            vertex,
            reason: format!("non-finite coordinate {v}"),
        });
    }
    let r = v.round();
    if r < 0.0 {
        return Err(CloudError::NegativeCoordinate(vertex));
    }
    if r >= (1u64 << 31) as f64 {
        return Err(CloudError::InvalidValue {
            vertex,
            reason: format!("coordinate {v} too large"),
        });
    }
    Ok(r as u32)
}

fn to_color(v: f64, vertex: usize) -> Result<u8> {
    if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
        return Err(CloudError::InvalidValue {
            vertex,
            reason: format!("color component {v} outside 0..=255"),
        });
    }
    Ok(v as u8)
}

fn build_vertex(values: &[f64], h: &Header, vertex: usize) -> Result<(Position, Rgb)> {
    let get = |k: usize| values[h.columns[k]];
    Ok((
        [to_coord(get(0), vertex)?, to_coord(get(1), vertex)?, to_coord(get(2), vertex)?],
        [to_color(get(3), vertex)?, to_color(get(4), vertex)?, to_color(get(5), vertex)?],
    ))
}

/// Parses an ASCII or binary little-endian PLY. Float coordinates are rounded
/// half away from zero; point order follows the file.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let h = parse_header(bytes)?;
    let body = &bytes[h.body_offset..];
    let mut positions = Vec::with_capacity(h.count);
    let mut colors = Vec::with_capacity(h.count);
    match h.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| CloudError::InvalidValue {
                vertex: 0,
                reason: "ASCII body is not valid text".into(),
            })?;
            let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            if rows.len() != h.count {
                return Err(CloudError::CountMismatch {
                    declared: h.count,
                    found: rows.len(),
                });
            }
            let mut values = Vec::with_capacity(h.record_types.len());
            for (i, row) in rows.iter().enumerate() {
                values.clear();
                for tok in row.split_whitespace() {
                    values.push(tok.parse::<f64>().map_err(|_| CloudError::InvalidValue {
                        vertex: i,
                        reason: format!("cannot parse `{tok}`"),
                    })?);
                }
                if values.len() != h.record_types.len() {
                    return Err(CloudError::InvalidValue {
                        vertex: i,
                        reason: format!("expected {} values, found {}", h.record_types.len(), values.len()),
                    });
                }
                let (p, c) = build_vertex(&values, &h, i)?;
                positions.push(p);
                colors.push(c);
            }
        }
        PlyFormat::BinaryLe => {
            let stride: usize = h.record_types.iter().map(|t| t.size()).sum();
            if body.len() != stride * h.count {
                return Err(CloudError::CountMismatch {
                    declared: h.count,
                    found: body.len() / stride,
                });
            }
            let mut values = vec![0.0; h.record_types.len()];
            for (i, rec) in body.chunks_exact(stride).enumerate() {
                let mut off = 0;
                for (v, t) in values.iter_mut().zip(&h.record_types) {
                    *v = t.read_le(&rec[off..]);
                    off += t.size();
                }
                let (p, c) = build_vertex(&values, &h, i)?;
                positions.push(p);
                colors.push(c);
            }
        }
    }
    PointCloud::new(positions, colors)
}

/// Writes `x, y, z` as float32 (exact integers) and `red, green, blue` as uchar.
pub fn write_ply(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    if cloud.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    if let Some(&coord) = cloud.positions().iter().flatten().find(|&&c| c > 1 << 24) {
        return Err(CloudError::CoordinateOverflow { coord, bits: 24 });
    }
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLe => "binary_little_endian",
    };
    let mut header = String::new();
    writeln!(header, "ply").unwrap();
    writeln!(header, "format {fmt} 1.0").unwrap();
    writeln!(header, "element vertex {}", cloud.len()).unwrap();
    for axis in ["x", "y", "z"] {
        writeln!(header, "property float {axis}").unwrap();
    }
    for ch in ["red", "green", "blue"] {
        writeln!(header, "property uchar {ch}").unwrap();
    }
    writeln!(header, "end_header").unwrap();

    let mut out = header.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::with_capacity(cloud.len() * 24);
            for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
                writeln!(body, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2]).unwrap();
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLe => {
            out.reserve(cloud.len() * 15);
            for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
                for &v in p {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                out.extend_from_slice(c);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 255 0 0\n";

    #[test]
    fn single_vertex() {
        let c = parse_ply(ONE.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.colors()[0], [255, 0, 0]);
        assert_eq!(c.resolution_bits(), 1);
    }

    #[test]
    fn missing_blue() {
        let text = ONE.replace("property uchar blue\n", "").replace("255 0 0", "255 0");
        assert_eq!(parse_ply(text.as_bytes()), Err(CloudError::MissingProperty("blue")));
    }

    #[test]
    fn distinct_diagnostics() {
        assert!(matches!(
            parse_ply(b"ply\nformat ascii 1.0\n"),
            Err(CloudError::MalformedHeader(_))
        ));
        let short = ONE.replace("element vertex 1", "element vertex 2");
        assert_eq!(
            parse_ply(short.as_bytes()),
            Err(CloudError::CountMismatch { declared: 2, found: 1 })
        );
        let neg = ONE.replace("0 0 0 255", "-3 0 0 255");
        assert_eq!(parse_ply(neg.as_bytes()), Err(CloudError::NegativeCoordinate(0)));
        let normals = ONE.replace("property uchar blue\n", "property uchar blue\nproperty float nx\n");
        assert!(matches!(
            parse_ply(normals.as_bytes()),
            Err(CloudError::Unsupported { kind: "property", .. })
        ));
        let face = ONE.replace("end_header", "element face 0\nend_header");
        assert!(matches!(
            parse_ply(face.as_bytes()),
            Err(CloudError::Unsupported { kind: "element", .. })
        ));
    }

    #[test]
    fn float_coordinates_round_half_away() {
        let text = ONE.replace("0 0 0 255", "2.5 0.49 1.5 255");
        let c = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(c.positions()[0], [3, 0, 2]);
        // -0.4 rounds to -0, which is not negative.
        let text = ONE.replace("0 0 0 255", "-0.4 0 0 255");
        assert_eq!(parse_ply(text.as_bytes()).unwrap().positions()[0], [0, 0, 0]);
    }

    #[test]
    fn header_declares_count() {
        let c = PointCloud::new(vec![[1, 2, 3]], vec![[4, 5, 6]]).unwrap();
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLe] {
            let bytes = write_ply(&c, f).unwrap();
            let text = String::from_utf8_lossy(&bytes);
            assert!(text.contains("element vertex 1\n"));
            assert_eq!(parse_ply(&bytes).unwrap(), c);
        }
    }

    #[test]
    fn integer_typed_binary_coordinates() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty uchar red\nproperty int x\nproperty int y\nproperty int z\nproperty uchar green\nproperty uchar blue\nend_header\n".to_vec();
        bytes.push(9);
        for v in [5i32, 6, 7] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[10, 11]);
        let c = parse_ply(&bytes).unwrap();
        assert_eq!(c.positions()[0], [5, 6, 7]);
        assert_eq!(c.colors()[0], [9, 10, 11]);
    }
}
