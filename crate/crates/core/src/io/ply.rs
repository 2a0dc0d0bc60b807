//! PLY point clouds: ASCII and binary, vertex element only.
//!
//! Values are held as `f64` columns, which represent every PLY scalar type
//! exactly, so a file read and written again reproduces its payload
//! bit-for-bit. Properties this crate does not interpret are carried along
//! unchanged.

use crate::cloud::{CloudPoint, ColoredPointCloud, Provenance};
use crate::splat::field::{GaussianField, GaussianPrimitive};
use nalgebra::{Vector3, Vector4};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("PLY body ends early: expected {expected} vertices, read {read}")]
    TruncatedBody { expected: usize, read: usize },
    #[error("unsupported PLY property: {0}")]
    UnsupportedProperty(String),
    #[error("invalid PLY value: {0}")]
    InvalidValue(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

impl PlyFormat {
    fn header_name(self) -> &'static str {
        match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
            PlyFormat::BinaryBigEndian => "binary_big_endian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            ScalarType::I8 => "char",
            ScalarType::U8 => "uchar",
            ScalarType::I16 => "short",
            ScalarType::U16 => "ushort",
            ScalarType::I32 => "int",
            ScalarType::U32 => "uint",
            ScalarType::F32 => "float",
            ScalarType::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    /// Converts to the representable value of this type (rounding integers,
    /// saturating at the type's range).
    fn quantize(self, v: f64) -> f64 {
        match self {
            ScalarType::I8 => (v.round() as i8) as f64,
            ScalarType::U8 => (v.round() as u8) as f64,
            ScalarType::I16 => (v.round() as i16) as f64,
            ScalarType::U16 => (v.round() as u16) as f64,
            ScalarType::I32 => (v.round() as i32) as f64,
            ScalarType::U32 => (v.round() as u32) as f64,
            ScalarType::F32 => (v as f32) as f64,
            ScalarType::F64 => v,
        }
    }

    fn decode(self, b: &[u8], big: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => num!(i16, 2),
            ScalarType::U16 => num!(u16, 2),
            ScalarType::I32 => num!(i32, 4),
            ScalarType::U32 => num!(u32, 4),
            ScalarType::F32 => num!(f32, 4),
            ScalarType::F64 => num!(f64, 8),
        }
    }

    fn encode(self, v: f64, big: bool, out: &mut Vec<u8>) {
        macro_rules! put {
            ($x:expr) => {{
                let x = $x;
                out.extend_from_slice(&if big { x.to_be_bytes() } else { x.to_le_bytes() });
            }};
        }
        let v = self.quantize(v);
        match self {
            ScalarType::I8 => out.push(v as i8 as u8),
            ScalarType::U8 => out.push(v as u8),
            ScalarType::I16 => put!(v as i16),
            ScalarType::U16 => put!(v as u16),
            ScalarType::I32 => put!(v as i32),
            ScalarType::U32 => put!(v as u32),
            ScalarType::F32 => put!(v as f32),
            ScalarType::F64 => put!(v),
        }
    }

    fn format_ascii(self, v: f64, out: &mut String) {
        let v = self.quantize(v);
        let _ = match self {
            ScalarType::F32 => write!(out, "{}", v as f32),
            ScalarType::F64 => write!(out, "{v:?}"),
            _ => write!(out, "{}", v as i64),
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub ty: ScalarType,
}

impl Property {
    pub fn new(name: &str, ty: ScalarType) -> Self {
        Self { name: name.to_string(), ty }
    }
}

/// Vertex records stored column-wise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexTable {
    pub properties: Vec<Property>,
    pub columns: Vec<Vec<f64>>,
}

impl VertexTable {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.columns[i].as_slice())
    }

    /// Appends a column, quantising values to the property type.
    pub fn push(&mut self, prop: Property, values: Vec<f64>) {
        let ty = prop.ty;
        self.properties.push(prop);
        self.columns.push(values.into_iter().map(|v| ty.quantize(v)).collect());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyFile {
    pub format: PlyFormat,
    pub comments: Vec<String>,
    pub vertices: VertexTable,
}

struct Header {
    format: PlyFormat,
    comments: Vec<String>,
    count: usize,
    properties: Vec<Property>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let bad = |m: &str| PlyError::MalformedHeader(m.to_string());
    let end_marker = b"end_header";
    let pos = bytes
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .ok_or_else(|| bad("missing end_header"))?;
    let mut body_offset = pos + end_marker.len();
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) != Some(&b'\n') {
        return Err(bad("end_header not followed by a newline"));
    }
    body_offset += 1;
    let text = std::str::from_utf8(&bytes[..pos]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim_end);
    if lines.next() != Some("ply") {
        return Err(bad("missing `ply` magic"));
    }
    let mut format = None;
    let mut comments = Vec::new();
    let mut count = None;
    let mut properties = Vec::new();
    // Name of the element currently being declared.
    let mut current: Option<String> = None;
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("format") => {
                format = Some(match (tok.next(), tok.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (Some("binary_big_endian"), Some("1.0")) => PlyFormat::BinaryBigEndian,
                    _ => return Err(bad(&format!("unknown format line `{line}`"))),
                });
            }
            Some("comment") => comments.push(line.strip_prefix("comment").unwrap_or("").trim_start().to_string()),
            Some("obj_info") => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| bad("element without a name"))?;
                let n: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad(&format!("bad element count in `{line}`")))?;
                if name == "vertex" {
                    if count.is_some() {
                        return Err(bad("duplicate vertex element"));
                    }
                    count = Some(n);
                } else if n > 0 {
                    return Err(bad(&format!("unsupported non-empty element `{name}`")));
                }
                current = Some(name.to_string());
            }
            Some("property") => {
                let elem = current.as_deref().ok_or_else(|| bad("property before any element"))?;
                let ty = tok.next().ok_or_else(|| bad("property without a type"))?;
                if elem != "vertex" {
                    continue;
                }
                if ty == "list" {
                    return Err(PlyError::UnsupportedProperty(format!("list property in `{line}`")));
                }
                let name = tok.next().ok_or_else(|| bad("property without a name"))?;
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| PlyError::UnsupportedProperty(format!("type `{ty}` of `{name}`")))?;
                if properties.iter().any(|p: &Property| p.name == name) {
                    return Err(bad(&format!("duplicate property `{name}`")));
                }
                properties.push(Property::new(name, ty));
            }
            Some(other) => return Err(bad(&format!("unknown header keyword `{other}`"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| bad("missing format line"))?,
        comments,
        count: count.ok_or_else(|| bad("missing vertex element"))?,
        properties,
        body_offset,
    })
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyFile, PlyError> {
    let h = parse_header(bytes)?;
    let body = &bytes[h.body_offset..];
    let np = h.properties.len();
    let mut columns = vec![Vec::with_capacity(h.count); np];
    match h.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| PlyError::InvalidValue("ASCII body is not UTF-8".into()))?;
            let mut tokens = text.split_ascii_whitespace();
            for read in 0..h.count {
                for (p, col) in h.properties.iter().zip(columns.iter_mut()) {
                    let t = tokens.next().ok_or(PlyError::TruncatedBody { expected: h.count, read })?;
                    let v: f64 = t
                        .parse()
                        .map_err(|_| PlyError::InvalidValue(format!("`{t}` for property `{}`", p.name)))?;
                    col.push(p.ty.quantize(v));
                }
            }
        }
        PlyFormat::BinaryLittleEndian | PlyFormat::BinaryBigEndian => {
            let big = h.format == PlyFormat::BinaryBigEndian;
            let stride: usize = h.properties.iter().map(|p| p.ty.size()).sum();
            let available = if stride == 0 { h.count } else { body.len() / stride };
            if available < h.count {
                return Err(PlyError::TruncatedBody { expected: h.count, read: available });
            }
            for rec in body.chunks_exact(stride.max(1)).take(h.count) {
                let mut off = 0;
                for (p, col) in h.properties.iter().zip(columns.iter_mut()) {
                    col.push(p.ty.decode(&rec[off..], big));
                    off += p.ty.size();
                }
            }
        }
    }
    if np == 0 && h.count > 0 {
        return Err(PlyError::MalformedHeader("vertex element without properties".into()));
    }
    Ok(PlyFile { format: h.format, comments: h.comments, vertices: VertexTable { properties: h.properties, columns } })
}

pub fn serialize_ply(file: &PlyFile) -> Vec<u8> {
    let t = &file.vertices;
    let mut head = String::from("ply\n");
    let _ = writeln!(head, "format {} 1.0", file.format.header_name());
    for c in &file.comments {
        let _ = writeln!(head, "comment {c}");
    }
    let _ = writeln!(head, "element vertex {}", t.len());
    for p in &t.properties {
        let _ = writeln!(head, "property {} {}", p.ty.name(), p.name);
    }
    head.push_str("end_header\n");
    let mut out = head.into_bytes();
    match file.format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            for i in 0..t.len() {
                for (k, (p, col)) in t.properties.iter().zip(&t.columns).enumerate() {
                    if k > 0 {
                        body.push(' ');
                    }
                    p.ty.format_ascii(col[i], &mut body);
                }
                body.push('\n');
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLittleEndian | PlyFormat::BinaryBigEndian => {
            let big = file.format == PlyFormat::BinaryBigEndian;
            for i in 0..t.len() {
                for (p, col) in t.properties.iter().zip(&t.columns) {
                    p.ty.encode(col[i], big, &mut out);
                }
            }
        }
    }
    out
}

pub fn read_ply(path: &Path) -> Result<PlyFile, PlyError> {
    parse_ply(&std::fs::read(path)?)
}

pub fn write_ply(path: &Path, file: &PlyFile) -> Result<(), PlyError> {
    std::fs::write(path, serialize_ply(file))?;
    Ok(())
}

const CLOUD_KNOWN: [&str; 8] = ["x", "y", "z", "red", "green", "blue", "track_len", "provenance"];

/// A cloud together with the vertex properties it does not model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyCloud {
    pub cloud: ColoredPointCloud,
    pub extra: VertexTable,
    pub comments: Vec<String>,
}

fn required_float<'a>(t: &'a VertexTable, name: &str) -> Result<&'a [f64], PlyError> {
    let i = t.index_of(name).ok_or_else(|| PlyError::MalformedHeader(format!("missing required property `{name}`")))?;
    if !t.properties[i].ty.is_float() {
        return Err(PlyError::UnsupportedProperty(format!("`{name}` must be float or double")));
    }
    Ok(&t.columns[i])
}

fn optional_typed<'a>(t: &'a VertexTable, name: &str, ok: &[ScalarType]) -> Result<Option<&'a [f64]>, PlyError> {
    match t.index_of(name) {
        None => Ok(None),
        Some(i) if ok.contains(&t.properties[i].ty) => Ok(Some(&t.columns[i])),
        Some(i) => Err(PlyError::UnsupportedProperty(format!("`{name}` has type {}", t.properties[i].ty.name()))),
    }
}

fn extras(t: &VertexTable, known: &[&str]) -> VertexTable {
    let mut out = VertexTable::default();
    for (p, c) in t.properties.iter().zip(&t.columns) {
        if !known.contains(&p.name.as_str()) {
            out.properties.push(p.clone());
            out.columns.push(c.clone());
        }
    }
    out
}

fn colors(t: &VertexTable) -> Result<Option<[&[f64]; 3]>, PlyError> {
    let ch: Vec<Option<&[f64]>> = ["red", "green", "blue"]
        .iter()
        .map(|n| optional_typed(t, n, &[ScalarType::U8]))
        .collect::<Result<_, _>>()?;
    match (ch[0], ch[1], ch[2]) {
        (Some(r), Some(g), Some(b)) => Ok(Some([r, g, b])),
        (None, None, None) => Ok(None),
        _ => Err(PlyError::MalformedHeader("incomplete red/green/blue properties".into())),
    }
}

/// Interprets a vertex table as a colored cloud. Missing colors default to
/// mid grey; a zero `track_len` means "not from a track".
pub fn cloud_from_ply(file: &PlyFile) -> Result<PlyCloud, PlyError> {
    let t = &file.vertices;
    let (x, y, z) = (required_float(t, "x")?, required_float(t, "y")?, required_float(t, "z")?);
    let rgb = colors(t)?;
    let track = optional_typed(t, "track_len", &[ScalarType::I32, ScalarType::U32])?;
    let prov = optional_typed(t, "provenance", &[ScalarType::U8])?;
    let mut points = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let color = rgb.map_or([0.5; 3], |c| [c[0][i] / 255.0, c[1][i] / 255.0, c[2][i] / 255.0]);
        let provenance = match prov {
            None => Provenance::Sfm,
            Some(p) => Provenance::from_code(p[i] as u8)
                .ok_or_else(|| PlyError::InvalidValue(format!("provenance code {} at vertex {i}", p[i])))?,
        };
        let mut pt = CloudPoint::new(Vector3::new(x[i], y[i], z[i]), color, provenance);
        pt.track_len = track.and_then(|c| (c[i] > 0.0).then_some(c[i] as u32));
        points.push(pt);
    }
    Ok(PlyCloud { cloud: ColoredPointCloud::new(points), extra: extras(t, &CLOUD_KNOWN), comments: file.comments.clone() })
}

fn to_u8(c: f64) -> f64 {
    (c.clamp(0.0, 1.0) * 255.0).round()
}

/// Vertex table for a cloud: positions as float32, colors as uchar, plus
/// track length and provenance; `extra` columns are appended unchanged.
pub fn cloud_to_ply(cloud: &ColoredPointCloud, extra: Option<&VertexTable>, comments: &[String], format: PlyFormat) -> PlyFile {
    let pts = &cloud.points;
    let mut t = VertexTable::default();
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        t.push(Property::new(name, ScalarType::F32), pts.iter().map(|p| p.position[a]).collect());
    }
    for (a, name) in ["red", "green", "blue"].iter().enumerate() {
        t.push(Property::new(name, ScalarType::U8), pts.iter().map(|p| to_u8(p.color[a])).collect());
    }
    t.push(Property::new("track_len", ScalarType::I32), pts.iter().map(|p| p.track_len.unwrap_or(0) as f64).collect());
    t.push(Property::new("provenance", ScalarType::U8), pts.iter().map(|p| p.provenance.code() as f64).collect());
    if let Some(e) = extra {
        for (p, c) in e.properties.iter().zip(&e.columns) {
            if t.index_of(&p.name).is_none() && c.len() == pts.len() {
                t.push(p.clone(), c.clone());
            }
        }
    }
    PlyFile { format, comments: comments.to_vec(), vertices: t }
}

/// Vertex table for a Gaussian field. `scale_*` hold log-scales, `rot_*` the
/// (w, x, y, z) quaternion, `opacity` the logit and `dc_*` the raw color;
/// `red/green/blue` carry the clamped color for viewers.
pub fn field_to_ply(field: &GaussianField, comments: &[String], format: PlyFormat) -> PlyFile {
    let prims = &field.primitives;
    let mut t = VertexTable::default();
    let mut col = |name: &str, ty: ScalarType, f: &dyn Fn(&GaussianPrimitive) -> f64| {
        t.push(Property::new(name, ty), prims.iter().map(f).collect());
    };
    col("x", ScalarType::F32, &|p| p.mean.x);
    col("y", ScalarType::F32, &|p| p.mean.y);
    col("z", ScalarType::F32, &|p| p.mean.z);
    col("red", ScalarType::U8, &|p| to_u8(p.color.x));
    col("green", ScalarType::U8, &|p| to_u8(p.color.y));
    col("blue", ScalarType::U8, &|p| to_u8(p.color.z));
    col("scale_0", ScalarType::F32, &|p| p.log_scale.x);
    col("scale_1", ScalarType::F32, &|p| p.log_scale.y);
    col("scale_2", ScalarType::F32, &|p| p.log_scale.z);
    for k in 0..4 {
        col(&format!("rot_{k}"), ScalarType::F32, &|p| p.rotation[k]);
    }
    col("opacity", ScalarType::F32, &|p| p.opacity_logit);
    col("dc_0", ScalarType::F32, &|p| p.color.x);
    col("dc_1", ScalarType::F32, &|p| p.color.y);
    col("dc_2", ScalarType::F32, &|p| p.color.z);
    PlyFile { format, comments: comments.to_vec(), vertices: t }
}

pub fn field_from_ply(file: &PlyFile) -> Result<GaussianField, PlyError> {
    let t = &file.vertices;
    let get = |n: &str| required_float(t, n);
    let (x, y, z) = (get("x")?, get("y")?, get("z")?);
    let s = [get("scale_0")?, get("scale_1")?, get("scale_2")?];
    let r = [get("rot_0")?, get("rot_1")?, get("rot_2")?, get("rot_3")?];
    let o = get("opacity")?;
    let dc: Option<Vec<&[f64]>> = ["dc_0", "dc_1", "dc_2"].iter().map(|n| get(n).ok()).collect();
    let rgb = colors(t)?;
    let mut prims = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let color = match (&dc, rgb) {
            (Some(d), _) => Vector3::new(d[0][i], d[1][i], d[2][i]),
            (None, Some(c)) => Vector3::new(c[0][i], c[1][i], c[2][i]) / 255.0,
            (None, None) => Vector3::repeat(0.5),
        };
        let p = GaussianPrimitive {
            mean: Vector3::new(x[i], y[i], z[i]),
            log_scale: Vector3::new(s[0][i], s[1][i], s[2][i]),
            rotation: Vector4::new(r[0][i], r[1][i], r[2][i], r[3][i]),
            opacity_logit: o[i],
            color,
        };
        if !p.is_valid() {
            return Err(PlyError::InvalidValue(format!("degenerate primitive at vertex {i}")));
        }
        prims.push(p);
    }
    Ok(GaussianField::new(prims))
}
