//! Point cloud files: PLY (ASCII and binary little-endian) and
//! whitespace-delimited XYZ text.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Reads a cloud, choosing the parser from the file contents: anything
/// starting with the `ply` magic is PLY, everything else XYZ text.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let bytes = fs::read(path.as_ref())?;
    parse_cloud(&bytes)
}

pub fn parse_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.starts_with(b"ply") {
        parse_ply(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "not UTF-8 text"))?;
        parse_xyz(text)
    }
}

/// One point per line: `x y z` or `x y z nx ny nz`. Blank lines and lines
/// starting with `#` are skipped. All data lines must have the same width.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("line {}", no + 1);
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(loc(), format!("`{t}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 3 && values.len() != 6 {
            return Err(Error::parse(loc(), format!("expected 3 or 6 values, found {}", values.len())));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::parse(loc(), format!("expected {w} values like the first record, found {}", values.len())))
            }
            _ => {}
        }
        positions.push(Vec3::new(values[0], values[1], values[2]));
        if values.len() == 6 {
            normals.push(Vec3::new(values[3], values[4], values[5]));
        }
    }
    assemble(positions, normals)
}

/// Normals that are off unit length (e.g. stored as `float`) are
/// renormalized; if any is zero or not finite the normals are dropped.
fn assemble(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Result<PointCloud> {
    let cloud = PointCloud::new(positions)?;
    if normals.is_empty() || normals.iter().any(|n| !(n.norm() > 0.0 && n.norm().is_finite())) {
        return Ok(cloud);
    }
    let normals = normals
        .into_iter()
        .map(|n| if (n.norm() - 1.0).abs() > 1e-9 { n.normalize() } else { n })
        .collect();
    cloud.with_normals(normals)
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
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
    format: PlyFormat,
    elements: Vec<Element>,
    /// Byte offset of the first data byte.
    data_start: usize,
    /// Number of header lines, for ASCII line numbers.
    lines: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(format!("line {}", line_no + 1), "header has no end_header line"))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        line_no += 1;
        let loc = || format!("line {line_no}");
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(loc(), "header is not ASCII"))?
            .trim();
        let mut words = line.split_whitespace();
        match words.next() {
            Some("ply") if line_no == 1 => {}
            _ if line_no == 1 => return Err(Error::parse(loc(), "missing `ply` magic")),
            Some("format") => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (Some(f), _) => return Err(Error::parse(loc(), format!("unsupported format `{f}`"))),
                    _ => return Err(Error::parse(loc(), "incomplete format line")),
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let (Some(name), Some(count)) = (words.next(), words.next()) else {
                    return Err(Error::parse(loc(), "element needs a name and a count"));
                };
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(loc(), "property before any element"))?;
                let words: Vec<&str> = words.collect();
                let ty = |s: &str| Scalar::parse(s).ok_or_else(|| Error::parse(loc(), format!("unknown type `{s}`")));
                let prop = match words.as_slice() {
                    ["list", count, item, _name] => Property::List {
                        count: ty(count)?,
                        item: ty(item)?,
                    },
                    [t, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: ty(t)?,
                    },
                    _ => return Err(Error::parse(loc(), "malformed property line")),
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::parse(loc(), format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse("header", "missing format line"))?;
    Ok(Header {
        format,
        elements,
        data_start: pos,
        lines: line_no,
    })
}

/// Column indices of x, y, z and the optional normal in the vertex element.
fn vertex_layout(vertex: &Element) -> Result<([usize; 3], Option<[usize; 3]>)> {
    let find = |want: &str| {
        vertex
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == want))
    };
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(Error::parse("header", "vertex element lacks x/y/z properties")),
    };
    let normal = match (find("nx"), find("ny"), find("nz")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    Ok((xyz, normal))
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vertex_at = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse("header", "no vertex element"))?;
    let (xyz, normal) = vertex_layout(&header.elements[vertex_at])?;
    let rows = match header.format {
        PlyFormat::Ascii => read_ascii_rows(bytes, &header, vertex_at)?,
        PlyFormat::BinaryLittleEndian => read_binary_rows(bytes, &header, vertex_at)?,
    };
    let positions = rows.iter().map(|r| Vec3::new(r[xyz[0]], r[xyz[1]], r[xyz[2]])).collect();
    let normals = match normal {
        Some(n) => rows.iter().map(|r| Vec3::new(r[n[0]], r[n[1]], r[n[2]])).collect(),
        None => Vec::new(),
    };
    assemble(positions, normals)
}

/// Scalar values of every vertex; list properties never occur in the
/// vertex rows we keep, and other elements are skipped.
fn read_ascii_rows(bytes: &[u8], header: &Header, vertex_at: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::str::from_utf8(&bytes[header.data_start..])
        .map_err(|e| Error::parse(format!("byte {}", header.data_start + e.valid_up_to()), "body is not ASCII"))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut rows = Vec::new();
    for (idx, element) in header.elements.iter().enumerate().take(vertex_at + 1) {
        for read in 0..element.count {
            let Some((no, line)) = lines.next() else {
                return Err(Error::parse(
                    format!("line {}", header.lines + text.lines().count() + 1),
                    format!("expected {} {} records, found {read}", element.count, element.name),
                ));
            };
            if idx != vertex_at {
                continue;
            }
            let loc = || format!("line {}", header.lines + no + 1);
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(loc(), format!("`{t}` is not a number"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != element.properties.len() {
                return Err(Error::parse(
                    loc(),
                    format!("expected {} values, found {}", element.properties.len(), values.len()),
                ));
            }
            rows.push(values);
        }
    }
    Ok(rows)
}

fn read_binary_rows(bytes: &[u8], header: &Header, vertex_at: usize) -> Result<Vec<Vec<f64>>> {
    let mut pos = header.data_start;
    let mut rows = Vec::new();
    let short = |pos: usize, element: &Element, read: usize| {
        Error::parse(
            format!("byte {pos}"),
            format!("expected {} {} records, found {read}", element.count, element.name),
        )
    };
    for (idx, element) in header.elements.iter().enumerate().take(vertex_at + 1) {
        for read in 0..element.count {
            let mut row = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                match *prop {
                    Property::Scalar { ty, .. } => {
                        let b = bytes.get(pos..pos + ty.size()).ok_or_else(|| short(pos, element, read))?;
                        row.push(ty.read_le(b));
                        pos += ty.size();
                    }
                    Property::List { count, item } => {
                        let b = bytes.get(pos..pos + count.size()).ok_or_else(|| short(pos, element, read))?;
                        let n = count.read_le(b);
                        if !(n >= 0.0) {
                            return Err(Error::parse(format!("byte {pos}"), "negative list length"));
                        }
                        pos += count.size() + n as usize * item.size();
                        if pos > bytes.len() {
                            return Err(short(pos, element, read));
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            if idx == vertex_at {
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Writes PLY for `.ply` paths (binary little-endian) and XYZ text
/// otherwise. Normals are written when present.
pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => ply_bytes(cloud, PlyFormat::BinaryLittleEndian),
        _ => xyz_text(cloud).into_bytes(),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    fs::write(path, ply_bytes(cloud, format))?;
    Ok(())
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn row_values(cloud: &PointCloud, i: usize) -> Vec<f64> {
    let p = cloud.positions()[i];
    let mut v = vec![p.x, p.y, p.z];
    if let Some(n) = cloud.normals() {
        v.extend_from_slice(n[i].as_slice());
    }
    v
}

pub fn xyz_text(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for i in 0..cloud.len() {
        let fields: Vec<String> = row_values(cloud, i).into_iter().map(fmt17).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

pub fn ply_bytes(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut names = vec!["x", "y", "z"];
    if cloud.normals().is_some() {
        names.extend(["nx", "ny", "nz"]);
    }
    write!(out, "ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len()).unwrap();
    for n in &names {
        writeln!(out, "property double {n}").unwrap();
    }
    out.extend_from_slice(b"end_header\n");
    match format {
        PlyFormat::Ascii => out.extend_from_slice(xyz_text(cloud).as_bytes()),
        PlyFormat::BinaryLittleEndian => {
            for i in 0..cloud.len() {
                for v in row_values(cloud, i) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}
