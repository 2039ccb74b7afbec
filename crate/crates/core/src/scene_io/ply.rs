//! Binary little-endian PLY reading and writing for meshes and labelled
//! point clouds.
//!
//! Written files carry `x, y, z` as `float`, optional `red, green, blue`
//! and `label` as `uchar`, and an optional `face` element with a
//! `list uchar int vertex_indices` property. The reader accepts any scalar
//! types for these properties, skips unknown properties and elements, and
//! fan-triangulates polygons.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Raw contents of a PLY file in the subset this crate understands.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub positions: Vec<[f32; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub labels: Option<Vec<u8>>,
    /// `None` for point clouds (no face element at all).
    pub faces: Option<Vec<[u32; 3]>>,
}

pub fn encode_ply(data: &PlyData) -> Vec<u8> {
    let n = data.positions.len();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\ncomment semfuse\n");
    header += &format!("element vertex {n}\n");
    header += "property float x\nproperty float y\nproperty float z\n";
    if data.colors.is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    if data.labels.is_some() {
        header += "property uchar label\n";
    }
    if let Some(faces) = &data.faces {
        header += &format!("element face {}\n", faces.len());
        header += "property list uchar int vertex_indices\n";
    }
    header += "end_header\n";

    let mut out = header.into_bytes();
    for i in 0..n {
        for c in data.positions[i] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(colors) = &data.colors {
            out.extend_from_slice(&colors[i]);
        }
        if let Some(labels) = &data.labels {
            out.push(labels[i]);
        }
    }
    if let Some(faces) = &data.faces {
        for f in faces {
            out.push(3);
            for idx in f {
                out.extend_from_slice(&(*idx as i32).to_le_bytes());
            }
        }
    }
    out
}

pub fn write_ply(data: &PlyData, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_ply(data))
        .map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ply(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Ply {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "unexpected end of file (needed {n} more bytes, {} left)",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let rel = self.bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.err("unterminated header line"))?;
        self.pos = start + rel + 1;
        std::str::from_utf8(&self.bytes[start..start + rel])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| Error::Ply {
                offset: start as u64,
                reason: "header is not valid UTF-8".into(),
            })
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        let b = self.take(ty.size())?;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }

    /// Reads a `float` property without widening so that f32 data
    /// round-trips bit-exactly.
    fn coordinate(&mut self, ty: Scalar) -> Result<f32> {
        if ty == Scalar::F32 {
            let b = self.take(4)?;
            Ok(f32::from_le_bytes(b.try_into().unwrap()))
        } else {
            Ok(self.scalar(ty)? as f32)
        }
    }
}

fn parse_header(cur: &mut Cursor) -> Result<Vec<Element>> {
    let magic_at = cur.pos;
    if cur.line()? != "ply" {
        return Err(Error::Ply {
            offset: magic_at as u64,
            reason: "missing 'ply' magic".into(),
        });
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let at = cur.pos as u64;
        let line = cur.line()?;
        let mut words = line.split_whitespace();
        let bad = |reason: String| Error::Ply { offset: at, reason };
        match words.next() {
            Some("format") => {
                let fmt = words.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(bad(format!("unsupported format '{fmt}'")));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = words.next().ok_or_else(|| bad("element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad(format!("bad count for element '{name}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before any element".into()))?;
                let first = words.next().unwrap_or("");
                let property = if first == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    let name = words.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(bad(format!("malformed list property '{line}'"))),
                    }
                } else {
                    let ty = Scalar::parse(first)
                        .ok_or_else(|| bad(format!("unknown property type '{first}'")))?;
                    let name = words
                        .next()
                        .ok_or_else(|| bad("property without name".into()))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(property);
            }
            Some("end_header") => return Ok(elements),
            Some(other) => return Err(bad(format!("unexpected header keyword '{other}'"))),
        }
    }
}

pub fn decode_ply(bytes: &[u8]) -> Result<PlyData> {
    let mut cur = Cursor { bytes, pos: 0 };
    let elements = parse_header(&mut cur)?;
    let mut data = PlyData::default();

    for element in &elements {
        match element.name.as_str() {
            "vertex" => read_vertices(&mut cur, element, &mut data)?,
            "face" => {
                let mut faces = Vec::with_capacity(element.count);
                for _ in 0..element.count {
                    read_face(&mut cur, element, &mut faces, data.positions.len())?;
                }
                data.faces = Some(faces);
            }
            _ => {
                for _ in 0..element.count {
                    for p in &element.properties {
                        skip_property(&mut cur, p)?;
                    }
                }
            }
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.err(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(data)
}

fn skip_property(cur: &mut Cursor, p: &Property) -> Result<()> {
    match p {
        Property::Scalar { ty, .. } => {
            cur.take(ty.size())?;
        }
        Property::List { count, item, .. } => {
            let n = cur.scalar(*count)?;
            if n < 0.0 {
                return Err(cur.err("negative list length"));
            }
            cur.take(n as usize * item.size())?;
        }
    }
    Ok(())
}

fn read_vertices(cur: &mut Cursor, element: &Element, data: &mut PlyData) -> Result<()> {
    let has = |n: &str| {
        element
            .properties
            .iter()
            .any(|p| matches!(p, Property::Scalar { name, .. } if name == n))
    };
    for axis in ["x", "y", "z"] {
        if !has(axis) {
            return Err(cur.err(format!("vertex element lacks '{axis}'")));
        }
    }
    let with_color = has("red") && has("green") && has("blue");
    let with_label = has("label");
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    data.positions.reserve(element.count);
    for _ in 0..element.count {
        let mut pos = [0f32; 3];
        let mut rgb = [0u8; 3];
        let mut label = 0u8;
        for p in &element.properties {
            match p {
                Property::Scalar { name, ty } => match name.as_str() {
                    "x" => pos[0] = cur.coordinate(*ty)?,
                    "y" => pos[1] = cur.coordinate(*ty)?,
                    "z" => pos[2] = cur.coordinate(*ty)?,
                    "red" => rgb[0] = cur.scalar(*ty)? as u8,
                    "green" => rgb[1] = cur.scalar(*ty)? as u8,
                    "blue" => rgb[2] = cur.scalar(*ty)? as u8,
                    "label" => {
                        let at = cur.pos;
                        let v = cur.scalar(*ty)?;
                        if !(0.0..=255.0).contains(&v) {
                            return Err(Error::Ply {
                                offset: at as u64,
                                reason: format!("label {v} does not fit a class index"),
                            });
                        }
                        label = v as u8;
                    }
                    _ => {
                        cur.take(ty.size())?;
                    }
                },
                list => skip_property(cur, list)?,
            }
        }
        data.positions.push(pos);
        if with_color {
            colors.push(rgb);
        }
        if with_label {
            labels.push(label);
        }
    }
    data.colors = with_color.then_some(colors);
    data.labels = with_label.then_some(labels);
    Ok(())
}

fn read_face(
    cur: &mut Cursor,
    element: &Element,
    faces: &mut Vec<[u32; 3]>,
    vertex_count: usize,
) -> Result<()> {
    for p in &element.properties {
        match p {
            Property::List { name, count, item }
                if name == "vertex_indices" || name == "vertex_index" =>
            {
                let at = cur.pos;
                let n = cur.scalar(*count)? as usize;
                if n < 3 {
                    return Err(Error::Ply {
                        offset: at as u64,
                        reason: format!("face with {n} vertices"),
                    });
                }
                let mut idx = Vec::with_capacity(n);
                for _ in 0..n {
                    let at = cur.pos;
                    let v = cur.scalar(*item)?;
                    if v < 0.0 || v as usize >= vertex_count {
                        return Err(Error::Ply {
                            offset: at as u64,
                            reason: format!("vertex index {v} out of range ({vertex_count} vertices)"),
                        });
                    }
                    idx.push(v as u32);
                }
                for k in 1..n - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            other => skip_property(cur, other)?,
        }
    }
    Ok(())
}
