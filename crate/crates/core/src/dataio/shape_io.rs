//! PLY (ASCII and binary) and ASCII OBJ readers/writers.

use std::io::Write;
use std::path::Path;

use crate::error::{LmptError, Result};
use crate::geometry::{Point3, PointCloud, TriangleMesh};
use crate::scalar::Scalar;

/// A loaded shape file: a bare point set or a triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape<S> {
    Cloud(PointCloud<S>),
    Mesh(TriangleMesh<S>),
}

impl<S: Scalar> Shape<S> {
    pub fn vertices(&self) -> &[Point3<S>] {
        match self {
            Shape::Cloud(c) => c.points(),
            Shape::Mesh(m) => &m.vertices,
        }
    }
}

fn fmt_err(path: &Path, msg: impl std::fmt::Display) -> LmptError {
    LmptError::Format(format!("{}: {msg}", path.display()))
}

/// Loads a `.ply` or `.obj` file. Files without faces become clouds.
pub fn load_shape<S: Scalar>(path: &Path) -> Result<Shape<S>> {
    let bytes = std::fs::read(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let (vertices, faces) = match ext.as_str() {
        "ply" => parse_ply(&bytes).map_err(|e| fmt_err(path, e))?,
        "obj" => parse_obj(&bytes).map_err(|e| fmt_err(path, e))?,
        other => return Err(fmt_err(path, format!("unsupported extension {other:?}"))),
    };
    to_shape(vertices, faces).map_err(|e| fmt_err(path, e))
}

fn to_shape<S: Scalar>(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Shape<S>, String> {
    if vertices.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err("non-finite vertex coordinate".into());
    }
    let verts: Vec<Point3<S>> = vertices.iter().map(|p| p.map(S::lit)).collect();
    if faces.is_empty() {
        PointCloud::new(verts).map(Shape::Cloud).map_err(|e| e.to_string())
    } else {
        TriangleMesh::new(verts, faces).map(Shape::Mesh).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    LittleEndian,
    BigEndian,
}

#[derive(Debug, Clone, Copy)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(format!("unknown PLY type {other}")),
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
}

#[derive(Debug)]
enum PlyProperty {
    Scalar { name: String, ty: PlyType },
    List { name: String, count: PlyType, item: PlyType },
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

struct BinReader<'a> {
    data: &'a [u8],
    pos: usize,
    big: bool,
}

impl BinReader<'_> {
    fn read(&mut self, ty: PlyType) -> Result<f64, String> {
        let n = ty.size();
        let chunk = self.data.get(self.pos..self.pos + n).ok_or("truncated binary body")?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(chunk);
        if self.big {
            buf[..n].reverse();
        }
        Ok(match ty {
            PlyType::I8 => buf[0] as i8 as f64,
            PlyType::U8 => buf[0] as f64,
            PlyType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::F64 => f64::from_le_bytes(buf),
        })
    }
}

type Parsed = (Vec<[f64; 3]>, Vec<[usize; 3]>);

fn parse_ply(bytes: &[u8]) -> Result<Parsed, String> {
    let header_end = find_subslice(bytes, b"end_header").ok_or("missing end_header")?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| "header is not UTF-8")?;
    let mut body_start = header_end + b"end_header".len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing ply magic".into());
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::LittleEndian,
                    "binary_big_endian" => PlyFormat::BigEndian,
                    other => return Err(format!("unknown PLY format {other}")),
                })
            }
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count {count}"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .properties
                .push(PlyProperty::List { name: name.to_string(), count: PlyType::parse(count)?, item: PlyType::parse(item)? }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .properties
                .push(PlyProperty::Scalar { name: name.to_string(), ty: PlyType::parse(ty)? }),
            _ => return Err(format!("unrecognized header line {line:?}")),
        }
    }
    let format = format.ok_or("missing format line")?;
    let body = &bytes[body_start..];

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut ascii_tokens = if format == PlyFormat::Ascii {
        Some(std::str::from_utf8(body).map_err(|_| "ASCII body is not UTF-8")?.split_ascii_whitespace())
    } else {
        None
    };
    let mut bin = BinReader { data: body, pos: 0, big: format == PlyFormat::BigEndian };
    let mut next = |ty: PlyType| -> Result<f64, String> {
        match ascii_tokens.as_mut() {
            Some(tokens) => {
                let t = tokens.next().ok_or("truncated ASCII body")?;
                t.parse::<f64>().map_err(|_| format!("bad number {t:?}"))
            }
            None => bin.read(ty),
        }
    };
    for el in &elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|axis| el.properties.iter().position(|p| matches!(p, PlyProperty::Scalar { name, .. } if name == axis)))
            .collect();
        for _ in 0..el.count {
            let mut p = [0.0; 3];
            let mut poly: Vec<usize> = Vec::new();
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    PlyProperty::Scalar { ty, .. } => {
                        let v = next(*ty)?;
                        if let Some(axis) = xyz.iter().position(|&a| a == Some(pi)) {
                            p[axis] = v;
                        }
                    }
                    PlyProperty::List { name, count, item } => {
                        let n = next(*count)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(format!("bad list length {n}"));
                        }
                        for _ in 0..n as usize {
                            let v = next(*item)?;
                            if name == "vertex_indices" || name == "vertex_index" {
                                if v < 0.0 || v.fract() != 0.0 {
                                    return Err(format!("bad vertex index {v}"));
                                }
                                poly.push(v as usize);
                            }
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    if xyz.iter().any(Option::is_none) {
                        return Err("vertex element lacks x/y/z".into());
                    }
                    vertices.push(p);
                }
                "face" => triangulate(&poly, &mut faces)?,
                _ => {}
            }
        }
    }
    check_faces(&faces, vertices.len())?;
    Ok((vertices, faces))
}

fn triangulate(poly: &[usize], faces: &mut Vec<[usize; 3]>) -> Result<(), String> {
    if poly.len() < 3 {
        return Err(format!("face with {} vertices", poly.len()));
    }
    for i in 1..poly.len() - 1 {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
    Ok(())
}

fn check_faces(faces: &[[usize; 3]], n: usize) -> Result<(), String> {
    match faces.iter().flatten().find(|&&i| i >= n) {
        Some(bad) => Err(format!("face references vertex {bad}, file has {n}")),
        None => Ok(()),
    }
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn parse_obj(bytes: &[u8]) -> Result<Parsed, String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "OBJ is not UTF-8")?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let t = tok.next().ok_or(format!("line {}: vertex needs 3 coordinates", ln + 1))?;
                    *c = t.parse().map_err(|_| format!("line {}: bad coordinate {t:?}", ln + 1))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| format!("line {}: bad face index {t:?}", ln + 1))?;
                    let idx = match i {
                        0 => return Err(format!("line {}: face index 0", ln + 1)),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            vertices.len().checked_sub(back).ok_or(format!("line {}: face index {i} out of range", ln + 1))?
                        }
                    };
                    poly.push(idx);
                }
                triangulate(&poly, &mut faces).map_err(|e| format!("line {}: {e}", ln + 1))?;
            }
            _ => {}
        }
    }
    check_faces(&faces, vertices.len())?;
    Ok((vertices, faces))
}

/// Writes vertices (and optional triangles) as PLY. Binary output stores
/// little-endian doubles, so coordinates roundtrip exactly.
pub fn write_ply<S: Scalar>(path: &Path, vertices: &[Point3<S>], faces: &[[usize; 3]], binary: bool) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let fmt = if binary { "binary_little_endian" } else { "ascii" };
    writeln!(out, "ply\nformat {fmt} 1.0\nelement vertex {}", vertices.len())?;
    writeln!(out, "property double x\nproperty double y\nproperty double z")?;
    if !faces.is_empty() {
        writeln!(out, "element face {}\nproperty list uchar int vertex_indices", faces.len())?;
    }
    writeln!(out, "end_header")?;
    for p in vertices {
        let p = p.map(|c| c.to_f64_lossless());
        if binary {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
        } else {
            writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
        }
    }
    for f in faces {
        if binary {
            out.push(3);
            for &i in f {
                out.extend_from_slice(&(i as i32).to_le_bytes());
            }
        } else {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_obj<S: Scalar>(path: &Path, vertices: &[Point3<S>], faces: &[[usize; 3]]) -> Result<()> {
    let mut out = String::new();
    for p in vertices {
        out.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    for f in faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ascii_ply_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.ply");
        std::fs::write(
            &p,
            "ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
             element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
        )
        .unwrap();
        match load_shape::<f64>(&p).unwrap() {
            Shape::Mesh(m) => {
                assert_eq!(m.faces, vec![[0, 1, 2]]);
                assert_eq!(m.vertices.len(), 3);
            }
            other => panic!("expected mesh, got {other:?}"),
        }
    }

    #[test]
    fn minimal_obj_mesh_and_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.obj");
        std::fs::write(&p, "# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        assert!(matches!(load_shape::<f64>(&p).unwrap(), Shape::Mesh(m) if m.faces.len() == 1));
        let q = dir.path().join("pts.obj");
        std::fs::write(&q, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 2 2\n").unwrap();
        assert!(matches!(load_shape::<f64>(&q).unwrap(), Shape::Cloud(c) if c.len() == 4));
    }

    #[test]
    fn point_only_ply_is_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.ply");
        let pts = vec![[0.5, 1.5, -2.0], [3.0, 4.0, 5.0]];
        write_ply::<f64>(&p, &pts, &[], false).unwrap();
        assert!(matches!(load_shape::<f64>(&p).unwrap(), Shape::Cloud(c) if c.len() == 2));
    }

    #[test]
    fn binary_roundtrip_is_exact_and_text_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let pts = vec![[0.1, 1.0 / 3.0, -2.583201917364815], [1e-7, 123.456789, 9.0]];
        let faces = vec![[0, 1, 0]];
        let b = dir.path().join("b.ply");
        write_ply::<f64>(&b, &pts, &faces, true).unwrap();
        assert_eq!(load_shape::<f64>(&b).unwrap().vertices(), pts.as_slice());
        for (name, write_text) in [("t.ply", 0), ("t.obj", 1)] {
            let t = dir.path().join(name);
            if write_text == 0 {
                write_ply::<f64>(&t, &pts, &faces, false).unwrap();
            } else {
                write_obj::<f64>(&t, &pts, &faces).unwrap();
            }
            for (a, e) in load_shape::<f64>(&t).unwrap().vertices().iter().zip(&pts) {
                for k in 0..3 {
                    assert!((a[k] - e[k]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn bad_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        std::fs::write(&p, "v 0 0 nan\n").unwrap();
        assert!(matches!(load_shape::<f64>(&p), Err(LmptError::Format(_))));
        std::fs::write(&p, "v 0 0 0\nf 1 2 3\n").unwrap();
        assert!(matches!(load_shape::<f64>(&p), Err(LmptError::Format(_))));
        let q = dir.path().join("bad.ply");
        std::fs::write(&q, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1\n").unwrap();
        assert!(matches!(load_shape::<f64>(&q), Err(LmptError::Format(_))));
    }
}
