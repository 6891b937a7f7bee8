// SPDX-License-Identifier: Apache-2.0

//! PLY point clouds, ASCII and binary little-endian. Only the vertex element
//! is read; `x`, `y`, `z` may be any scalar type and an optional integer
//! `label` property carries 0 = other, 1 = tread, 2 = clutter.

use std::io::{BufRead, BufReader, Read, Write};

use stairwise_core::{PointCloud, PointLabel};

use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
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

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("eight bytes")),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

impl Element {
    /// Record size in bytes, or `None` when the element has list properties.
    fn fixed_size(&self) -> Option<usize> {
        self.properties
            .iter()
            .map(|p| match p {
                Property::Scalar { ty, .. } => Some(ty.size()),
                Property::List { .. } => None,
            })
            .sum()
    }
}

fn bad(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

pub fn label_code(label: PointLabel) -> u8 {
    match label {
        PointLabel::Other => 0,
        PointLabel::Tread => 1,
        PointLabel::Clutter => 2,
    }
}

pub fn label_from_code(code: i64) -> Result<PointLabel, IoError> {
    match code {
        0 => Ok(PointLabel::Other),
        1 => Ok(PointLabel::Tread),
        2 => Ok(PointLabel::Clutter),
        _ => Err(bad(format!("unknown label code {code}"))),
    }
}

fn read_header<R: BufRead>(r: &mut R) -> Result<(PlyFormat, Vec<Element>), IoError> {
    let mut line = String::new();
    let next = |r: &mut R, line: &mut String| -> Result<(), IoError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(bad("unexpected end of PLY header"));
        }
        Ok(())
    };
    next(r, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(bad("missing PLY magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(r, &mut line)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, _] => return Err(bad(format!("unsupported PLY format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: (*name).to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, _name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let count = Scalar::parse(count).ok_or_else(|| bad("bad list count type"))?;
                let item = Scalar::parse(item).ok_or_else(|| bad("bad list item type"))?;
                el.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty}")))?;
                el.properties.push(Property::Scalar { name: (*name).to_string(), ty });
            }
            _ => return Err(bad(format!("unrecognised header line: {}", line.trim_end()))),
        }
    }
    Ok((format.ok_or_else(|| bad("missing format line"))?, elements))
}

struct VertexLayout {
    xyz: [usize; 3],
    label: Option<usize>,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout, IoError> {
    let find = |want: &str| {
        el.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == want))
    };
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(name).ok_or_else(|| bad(format!("vertex element lacks {name}")))?;
    }
    let label = find("label");
    if let Some(i) = label {
        if let Property::Scalar { ty, .. } = &el.properties[i] {
            if !ty.is_integer() {
                return Err(bad("label property must be an integer type"));
            }
        }
    }
    Ok(VertexLayout { xyz, label })
}

pub fn read_ply<R: Read>(reader: R) -> Result<PointCloud, IoError> {
    let mut r = BufReader::new(reader);
    let (format, elements) = read_header(&mut r)?;
    let vi = elements.iter().position(|e| e.name == "vertex").ok_or_else(|| bad("no vertex element"))?;
    let layout = vertex_layout(&elements[vi])?;
    match format {
        PlyFormat::Ascii => read_ascii(&mut r, &elements, vi, &layout),
        PlyFormat::BinaryLittleEndian => read_binary(&mut r, &elements, vi, &layout),
    }
}

fn assemble(points: Vec<[f64; 3]>, labels: Option<Vec<PointLabel>>) -> Result<PointCloud, IoError> {
    let cloud = PointCloud { points, labels };
    cloud.validate().map_err(|e| bad(e.to_string()))?;
    Ok(cloud)
}

fn read_ascii<R: BufRead>(r: &mut R, elements: &[Element], vi: usize, layout: &VertexLayout) -> Result<PointCloud, IoError> {
    let mut line = String::new();
    // earlier elements are skipped one line per record
    for el in &elements[..vi] {
        for _ in 0..el.count {
            line.clear();
            r.read_line(&mut line)?;
        }
    }
    let n = elements[vi].count;
    let mut points = Vec::with_capacity(n);
    let mut labels = layout.label.map(|_| Vec::with_capacity(n));
    for _ in 0..n {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("PLY body ended early"));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| bad(format!("bad number {w:?}"))))
            .collect::<Result<_, _>>()?;
        let get = |i: usize| vals.get(i).copied().ok_or_else(|| bad("short vertex record"));
        points.push([get(layout.xyz[0])?, get(layout.xyz[1])?, get(layout.xyz[2])?]);
        if let (Some(li), Some(ls)) = (layout.label, labels.as_mut()) {
            ls.push(label_from_code(get(li)? as i64)?);
        }
    }
    assemble(points, labels)
}

fn skip_binary<R: Read>(r: &mut R, el: &Element) -> Result<(), IoError> {
    if let Some(size) = el.fixed_size() {
        std::io::copy(&mut r.take((size * el.count) as u64), &mut std::io::sink())?;
        return Ok(());
    }
    let mut buf = [0u8; 8];
    for _ in 0..el.count {
        for p in &el.properties {
            match p {
                Property::Scalar { ty, .. } => r.read_exact(&mut buf[..ty.size()])?,
                Property::List { count, item } => {
                    r.read_exact(&mut buf[..count.size()])?;
                    let n = count.decode(&buf) as usize;
                    std::io::copy(&mut r.take((n * item.size()) as u64), &mut std::io::sink())?;
                }
            }
        }
    }
    Ok(())
}

fn read_binary<R: Read>(r: &mut R, elements: &[Element], vi: usize, layout: &VertexLayout) -> Result<PointCloud, IoError> {
    for el in &elements[..vi] {
        skip_binary(r, el)?;
    }
    let el = &elements[vi];
    let size = el.fixed_size().ok_or_else(|| bad("list properties on vertices are not supported"))?;
    let mut offsets = Vec::with_capacity(el.properties.len());
    let mut types = Vec::with_capacity(el.properties.len());
    let mut off = 0;
    for p in &el.properties {
        if let Property::Scalar { ty, .. } = p {
            offsets.push(off);
            types.push(*ty);
            off += ty.size();
        }
    }
    let field = |rec: &[u8], i: usize| types[i].decode(&rec[offsets[i]..]);
    let mut points = Vec::with_capacity(el.count);
    let mut labels = layout.label.map(|_| Vec::with_capacity(el.count));
    let mut rec = vec![0u8; size];
    for _ in 0..el.count {
        r.read_exact(&mut rec).map_err(|_| bad("PLY body ended early"))?;
        points.push([field(&rec, layout.xyz[0]), field(&rec, layout.xyz[1]), field(&rec, layout.xyz[2])]);
        if let (Some(li), Some(ls)) = (layout.label, labels.as_mut()) {
            ls.push(label_from_code(field(&rec, li) as i64)?);
        }
    }
    assemble(points, labels)
}

/// Writes `double x y z` and, when labels are present, `uchar label`.
pub fn write_ply<W: Write>(cloud: &PointCloud, format: PlyFormat, mut w: W) -> Result<(), IoError> {
    cloud.validate().map_err(|e| bad(e.to_string()))?;
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.labels.is_some() {
        writeln!(w, "property uchar label")?;
    }
    writeln!(w, "end_header")?;
    let labels = cloud.labels.as_deref();
    for (i, p) in cloud.points.iter().enumerate() {
        let code = labels.map(|l| label_code(l[i]));
        match format {
            PlyFormat::Ascii => {
                // `{}` on f64 prints the shortest string that round-trips
                write!(w, "{} {} {}", p[0], p[1], p[2])?;
                match code {
                    Some(c) => writeln!(w, " {c}")?,
                    None => writeln!(w)?,
                }
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = code {
                    w.write_all(&[c])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
