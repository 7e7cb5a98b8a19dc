//! ASCII XYZ and PLY (ASCII / binary little-endian) readers and writers.
//!
//! Files always carry absolute coordinates. On read, the centroid rounded to
//! whole meters becomes the cloud's `origin_shift` and is subtracted.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzAscii,
    Ply,
}

impl CloudFormat {
    /// Picks a format from a file extension (`.ply` or anything else = XYZ).
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::XyzAscii,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

pub fn parse_cloud(bytes: &[u8], format: CloudFormat) -> Result<PointCloud> {
    let mut cloud = match format {
        CloudFormat::XyzAscii => parse_xyz(bytes)?,
        CloudFormat::Ply => parse_ply(bytes)?.0,
    };
    apply_origin_shift(&mut cloud);
    Ok(cloud)
}

/// Serializes absolute coordinates. PLY output is binary little-endian with
/// 64-bit properties.
pub fn write_cloud(cloud: &PointCloud, format: CloudFormat, include_scalars: bool) -> Vec<u8> {
    match format {
        CloudFormat::XyzAscii => write_xyz(cloud, include_scalars),
        CloudFormat::Ply => write_ply(cloud, None, PlyEncoding::BinaryLittleEndian, include_scalars, &[]),
    }
}

/// Reads a PLY file with an optional `face` element. Polygons are fan-triangulated.
pub fn parse_mesh_ply(bytes: &[u8]) -> Result<(PointCloud, Vec<[usize; 3]>)> {
    let (mut cloud, faces) = parse_ply(bytes)?;
    apply_origin_shift(&mut cloud);
    Ok((cloud, faces))
}

pub fn write_mesh_ply(
    cloud: &PointCloud,
    triangles: &[[usize; 3]],
    encoding: PlyEncoding,
    include_scalars: bool,
) -> Vec<u8> {
    write_ply(cloud, Some(triangles), encoding, include_scalars, &[])
}

/// [`write_mesh_ply`] with extra header comment lines.
pub fn write_mesh_ply_with_comments(
    cloud: &PointCloud,
    triangles: &[[usize; 3]],
    encoding: PlyEncoding,
    include_scalars: bool,
    comments: &[String],
) -> Vec<u8> {
    write_ply(cloud, Some(triangles), encoding, include_scalars, comments)
}

/// Header comment lines of a PLY file, without the `comment` keyword.
pub fn ply_comments(bytes: &[u8]) -> Result<Vec<String>> {
    Ok(parse_header(bytes)?.comments)
}

fn apply_origin_shift(cloud: &mut PointCloud) {
    let Some(c) = cloud.centroid() else {
        return;
    };
    let shift = Vec3::new(c.x.round(), c.y.round(), c.z.round());
    for p in &mut cloud.points {
        *p -= shift;
    }
    cloud.origin_shift = shift;
}

// ---------------------------------------------------------------------------
// XYZ

const XYZ_DEFAULT_EXTRA: &str = "intensity";

fn parse_xyz(bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, format!("not UTF-8: {e}")))?;
    let mut names: Option<Vec<String>> = None;
    let mut field_count: Option<usize> = None;
    let mut points = Vec::new();
    let mut extras: Vec<Vec<f64>> = Vec::new();
    let mut seen_record = false;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            // "# x y z a b" before any record names the extra columns
            if !seen_record && names.is_none() {
                let toks: Vec<&str> = comment.split_whitespace().collect();
                if toks.len() >= 3 && toks[..3] == ["x", "y", "z"] {
                    names = Some(toks[3..].iter().map(|s| s.to_string()).collect());
                }
            }
            continue;
        }
        seen_record = true;
        let fields: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("invalid number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if fields.len() < 3 {
            return Err(Error::parse(
                lineno,
                format!("expected at least 3 fields, got {}", fields.len()),
            ));
        }
        match field_count {
            None => {
                field_count = Some(fields.len());
                extras = vec![Vec::new(); fields.len() - 3];
            }
            Some(n) if n != fields.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {n} fields, got {}", fields.len()),
                ));
            }
            _ => {}
        }
        if !fields.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(lineno, "non-finite value"));
        }
        points.push(Point3::new(fields[0], fields[1], fields[2]));
        for (dst, v) in extras.iter_mut().zip(&fields[3..]) {
            dst.push(*v);
        }
    }

    let mut cloud = PointCloud::new(points);
    let names = names.unwrap_or_default();
    for (k, values) in extras.into_iter().enumerate() {
        let name = match names.get(k) {
            Some(n) => n.clone(),
            None if k == 0 => XYZ_DEFAULT_EXTRA.to_string(),
            None => format!("extra_{k}"),
        };
        cloud.scalars.insert(name, values);
    }
    Ok(cloud)
}

fn write_xyz(cloud: &PointCloud, include_scalars: bool) -> Vec<u8> {
    let mut out = String::with_capacity(cloud.len() * 48 + 16);
    out.push_str("# x y z");
    let channels: Vec<(&String, &Vec<f64>)> = if include_scalars {
        cloud.scalars.iter().collect()
    } else {
        Vec::new()
    };
    for (name, _) in &channels {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..cloud.len() {
        let p = cloud.absolute(i);
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        for (_, values) in &channels {
            let _ = write!(out, " {}", values[i]);
        }
        out.push('\n');
    }
    out.into_bytes()
}

// ---------------------------------------------------------------------------
// PLY

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => return Err(Error::Format(format!("unsupported PLY property type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar {
        name: String,
        ty: ScalarType,
    },
    List {
        name: String,
        count: ScalarType,
        item: ScalarType,
    },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    comments: Vec<String>,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut lineno = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(lineno + 1, "unterminated PLY header"))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| Error::parse(lineno + 1, "header is not ASCII"))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        lineno += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if lineno == 1 {
            if line != "ply" {
                return Err(Error::parse(1, "missing `ply` magic"));
            }
            continue;
        }
        match toks.first().copied() {
            Some("format") => {
                encoding = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    Some(other) => return Err(Error::Format(format!("unsupported PLY encoding `{other}`"))),
                    None => return Err(Error::parse(lineno, "missing PLY encoding")),
                });
            }
            Some("comment") => comments.push(line["comment".len()..].trim().to_string()),
            Some("obj_info") | None => {}
            Some("element") => {
                if toks.len() != 3 {
                    return Err(Error::parse(lineno, "malformed element line"));
                }
                let count = toks[2]
                    .parse()
                    .map_err(|_| Error::parse(lineno, "invalid element count"))?;
                elements.push(Element {
                    name: toks[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(lineno, "property before element"))?;
                let prop = if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(Error::parse(lineno, "malformed list property"));
                    }
                    Property::List {
                        count: ScalarType::parse(toks[2])?,
                        item: ScalarType::parse(toks[3])?,
                        name: toks[4].to_string(),
                    }
                } else {
                    if toks.len() != 3 {
                        return Err(Error::parse(lineno, "malformed property line"));
                    }
                    Property::Scalar {
                        ty: ScalarType::parse(toks[1])?,
                        name: toks[2].to_string(),
                    }
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::parse(lineno, format!("unknown header keyword `{other}`"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| Error::parse(lineno, "missing format line"))?,
        comments,
        elements,
        body_offset: offset,
        body_line: lineno,
    })
}

/// Streams records out of an ASCII or binary body.
struct BodyReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    encoding: PlyEncoding,
    line: usize,
    tokens: std::vec::IntoIter<&'a str>,
    record: usize,
}

impl<'a> BodyReader<'a> {
    fn begin_record(&mut self) -> Result<()> {
        self.record += 1;
        if self.encoding == PlyEncoding::Ascii {
            loop {
                if self.pos >= self.bytes.len() {
                    return Err(Error::parse(self.line + 1, "unexpected end of file"));
                }
                let end = self.bytes[self.pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map_or(self.bytes.len(), |e| self.pos + e);
                let line = std::str::from_utf8(&self.bytes[self.pos..end])
                    .map_err(|_| Error::parse(self.line + 1, "body is not ASCII"))?;
                self.pos = (end + 1).min(self.bytes.len() + 1);
                self.line += 1;
                let toks: Vec<&'a str> = line.split_whitespace().collect();
                if !toks.is_empty() {
                    self.tokens = toks.into_iter();
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn location(&self) -> usize {
        match self.encoding {
            PlyEncoding::Ascii => self.line,
            PlyEncoding::BinaryLittleEndian => self.record,
        }
    }

    fn end_record(&mut self) -> Result<()> {
        if self.encoding == PlyEncoding::Ascii && self.tokens.len() > 0 {
            return Err(Error::parse(self.location(), "trailing fields in record"));
        }
        Ok(())
    }

    fn read(&mut self, ty: ScalarType) -> Result<f64> {
        match self.encoding {
            PlyEncoding::Ascii => {
                let loc = self.location();
                let tok = self.tokens.next().ok_or_else(|| Error::parse(loc, "missing field"))?;
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(loc, format!("invalid number `{tok}`")))
            }
            PlyEncoding::BinaryLittleEndian => {
                let n = ty.size();
                if self.pos + n > self.bytes.len() {
                    return Err(Error::parse(self.record, "unexpected end of binary body"));
                }
                let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
                self.pos += n;
                Ok(v)
            }
        }
    }
}

fn parse_ply(bytes: &[u8]) -> Result<(PointCloud, Vec<[usize; 3]>)> {
    let header = parse_header(bytes)?;
    let mut reader = BodyReader {
        bytes,
        pos: header.body_offset,
        encoding: header.encoding,
        line: header.body_line,
        tokens: Vec::new().into_iter(),
        record: 0,
    };

    let mut points = Vec::new();
    let mut channels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut normals: Option<Vec<Option<Vec3>>> = None;
    let mut faces = Vec::new();

    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            for name in ["x", "y", "z"] {
                if !el
                    .properties
                    .iter()
                    .any(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
                {
                    return Err(Error::Format(format!("vertex element lacks property `{name}`")));
                }
            }
            points.reserve(el.count);
        }
        let has_normals = is_vertex
            && ["nx", "ny", "nz"].iter().all(|n| {
                el.properties
                    .iter()
                    .any(|p| matches!(p, Property::Scalar { name, .. } if name == n))
            });
        if has_normals {
            normals = Some(Vec::with_capacity(el.count));
        }

        let mut values: Vec<f64> = Vec::with_capacity(el.properties.len());
        for _ in 0..el.count {
            reader.begin_record()?;
            values.clear();
            let mut xyz = [0.0f64; 3];
            let mut nrm = [0.0f64; 3];
            for prop in &el.properties {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = reader.read(*ty)?;
                        if !is_vertex {
                            continue;
                        }
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            "nx" if has_normals => nrm[0] = v,
                            "ny" if has_normals => nrm[1] = v,
                            "nz" if has_normals => nrm[2] = v,
                            other => channels.entry(other.to_string()).or_default().push(v),
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = reader.read(*count)?;
                        if !(n >= 0.0) || n.fract() != 0.0 {
                            return Err(Error::parse(reader.location(), "invalid list length"));
                        }
                        let n = n as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(reader.read(*item)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(Error::parse(reader.location(), "face with fewer than 3 vertices"));
                            }
                            let idx: Vec<usize> = idx
                                .iter()
                                .map(|&v| {
                                    if v >= 0.0 && v.fract() == 0.0 {
                                        Ok(v as usize)
                                    } else {
                                        Err(Error::parse(reader.location(), "invalid vertex index"))
                                    }
                                })
                                .collect::<Result<_>>()?;
                            for k in 1..n - 1 {
                                faces.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            reader.end_record()?;
            if is_vertex {
                if !xyz.iter().all(|v| v.is_finite()) {
                    return Err(Error::parse(reader.location(), "non-finite coordinate"));
                }
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
                if let Some(ns) = normals.as_mut() {
                    let n = Vec3::new(nrm[0], nrm[1], nrm[2]);
                    let len = n.norm();
                    ns.push((len > 0.0 && len.is_finite()).then(|| n / len));
                }
            }
        }
    }

    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= points.len()) {
        return Err(Error::Format(format!(
            "face references vertex {bad} of {}",
            points.len()
        )));
    }
    let mut cloud = PointCloud::new(points);
    cloud.normals = normals;
    cloud.scalars = channels;
    if let Some(id) = header.comments.iter().find_map(|c| c.strip_prefix("epoch ")) {
        cloud.epoch_id = id.trim().to_string();
    }
    Ok((cloud, faces))
}

fn write_ply(
    cloud: &PointCloud,
    triangles: Option<&[[usize; 3]]>,
    encoding: PlyEncoding,
    include_scalars: bool,
    comments: &[String],
) -> Vec<u8> {
    let channels: Vec<(&String, &Vec<f64>)> = if include_scalars {
        cloud.scalars.iter().collect()
    } else {
        Vec::new()
    };
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    if !cloud.epoch_id.is_empty() {
        let _ = writeln!(header, "comment epoch {}", cloud.epoch_id);
    }
    for c in comments {
        let _ = writeln!(header, "comment {}", c.replace('\n', " "));
    }
    let _ = writeln!(header, "element vertex {}", cloud.len());
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    for (name, _) in &channels {
        let _ = writeln!(header, "property double {name}");
    }
    if let Some(tris) = triangles {
        let _ = writeln!(header, "element face {}", tris.len());
        header.push_str("property list uchar int vertex_indices\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for i in 0..cloud.len() {
                let p = cloud.absolute(i);
                let _ = write!(body, "{} {} {}", p.x, p.y, p.z);
                for (_, v) in &channels {
                    let _ = write!(body, " {}", v[i]);
                }
                body.push('\n');
            }
            for t in triangles.unwrap_or(&[]) {
                let _ = writeln!(body, "3 {} {} {}", t[0], t[1], t[2]);
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            out.reserve(cloud.len() * 8 * (3 + channels.len()));
            for i in 0..cloud.len() {
                let p = cloud.absolute(i);
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                for (_, v) in &channels {
                    out.extend_from_slice(&v[i].to_le_bytes());
                }
            }
            for t in triangles.unwrap_or(&[]) {
                out.push(3);
                for &i in t {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_three_points() {
        let c = parse_cloud(b"0 0 0\n1 0 0\n0 1 0", CloudFormat::XyzAscii).unwrap();
        assert_eq!(c.len(), 3);
        let abs: Vec<Point3> = (0..3).map(|i| c.absolute(i)).collect();
        assert_eq!(
            abs,
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0)
            ]
        );
    }

    #[test]
    fn xyz_bad_line_reports_line_number() {
        match parse_cloud(b"a b c", CloudFormat::XyzAscii) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_cloud(b"# c\n0 0 0\n1 2\n", CloudFormat::XyzAscii) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn xyz_extra_column_becomes_intensity() {
        let c = parse_cloud(b"# scanner export\n0 0 0 17\n1 0 0 18\n", CloudFormat::XyzAscii).unwrap();
        assert_eq!(c.scalar("intensity").unwrap(), &[17.0, 18.0]);
    }

    #[test]
    fn origin_shift_is_rounded_centroid() {
        let c = parse_cloud(b"500000.2 4000000.7 10\n500001.2 4000001.7 12\n", CloudFormat::XyzAscii).unwrap();
        assert_eq!(c.origin_shift, Vec3::new(500001.0, 4000001.0, 11.0));
        assert!((c.points[0] - Point3::new(-0.8, -0.3, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn ply_empty_vertex_element() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        let c = parse_cloud(ply, CloudFormat::Ply).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn ply_unsupported_property_type() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty quad z\nend_header\n0 0 0\n";
        assert!(matches!(parse_cloud(ply, CloudFormat::Ply), Err(Error::Format(_))));
    }

    #[test]
    fn ply_ascii_malformed_record() {
        let ply = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 x 0\n";
        match parse_cloud(ply, CloudFormat::Ply) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 9),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ply_float32_binary_with_extra_property() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty float intensity\nproperty uchar tag\nend_header\n".to_vec();
        for (p, tag) in [([1.25f32, 2.5, -3.0, 0.5], 7u8), ([0.0, 0.1, 0.2, 9.0], 8)] {
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.push(tag);
        }
        let c = parse_cloud(&bytes, CloudFormat::Ply).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c.absolute(1) - Point3::new(0.0, 0.1, 0.2)).norm() < 1e-6);
        assert_eq!(c.scalar("intensity").unwrap(), &[0.5, 9.0]);
        assert_eq!(c.scalar("tag").unwrap(), &[7.0, 8.0]);
    }

    #[test]
    fn empty_cloud_writes_header_only() {
        let c = PointCloud::default();
        let ply = write_cloud(&c, CloudFormat::Ply, true);
        let back = parse_cloud(&ply, CloudFormat::Ply).unwrap();
        assert!(back.is_empty());
        let xyz = write_cloud(&c, CloudFormat::XyzAscii, true);
        assert_eq!(xyz, b"# x y z\n");
    }

    #[test]
    fn ply_lists_scalar_property() {
        let mut c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        c.set_scalar("displacement_m", vec![0.1, -0.2, 0.3]).unwrap();
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let bytes = write_ply(&c, None, enc, true, &[]);
            let text = String::from_utf8_lossy(&bytes);
            assert!(text.contains("property double displacement_m"));
            let back = parse_cloud(&bytes, CloudFormat::Ply).unwrap();
            assert_eq!(back.scalar("displacement_m").unwrap(), &[0.1, -0.2, 0.3]);
        }
    }

    #[test]
    fn mesh_round_trip() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.5]]);
        let tris = vec![[0, 1, 2], [1, 3, 2]];
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let bytes = write_mesh_ply(&c, &tris, enc, false);
            let (back, faces) = parse_mesh_ply(&bytes).unwrap();
            assert_eq!(faces, tris);
            assert_eq!(back.len(), 4);
        }
    }

    #[test]
    fn epoch_and_comments_survive_a_round_trip() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).with_epoch("II");
        let comments = vec!["interval_days 180".to_string()];
        let bytes = write_mesh_ply_with_comments(&c, &[[0, 1, 2]], PlyEncoding::BinaryLittleEndian, false, &comments);
        assert_eq!(
            ply_comments(&bytes).unwrap(),
            vec!["epoch II".to_string(), comments[0].clone()]
        );
        assert_eq!(parse_mesh_ply(&bytes).unwrap().0.epoch_id, "II");
    }

    #[test]
    fn big_endian_is_rejected() {
        let ply = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_cloud(ply, CloudFormat::Ply), Err(Error::Format(_))));
    }
}
