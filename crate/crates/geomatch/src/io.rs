//! Shape file I/O.
//!
//! Two plain-text formats are supported:
//!
//! * `.curve` — polyline format. Header `curve <dim> <n_vertices>
//!   <n_segments> <closed:0|1>`, then one vertex per line (`dim` floats),
//!   then one segment per line (two 0-based indices).
//! * `.obj` — Wavefront OBJ subset for triangle meshes: `v x y z` and
//!   `f i j k` lines with plain 1-based indices (no `/` texture or normal
//!   references). Comments and other keywords are ignored.
//!
//! Coordinates are written with shortest round-trip formatting, so
//! `load(save(shape))` reproduces the vertex array bit-exactly.

use crate::error::{Error, Result};
use crate::shapes::{ShapeKind, SimplicialShape};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFormat {
    Curve,
    Obj,
}

/// Infer the shape format from a file extension.
pub fn format_from_path(path: &Path) -> Result<ShapeFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("curve") => Ok(ShapeFormat::Curve),
        Some("obj") => Ok(ShapeFormat::Obj),
        other => Err(Error::UnsupportedFormat(format!(
            "{} (expected .curve or .obj)",
            other.unwrap_or("<no extension>")
        ))),
    }
}

/// Load a shape, inferring the format from the extension.
pub fn load_shape(path: &Path) -> Result<SimplicialShape> {
    let fmt = format_from_path(path)?;
    let text = std::fs::read_to_string(path)?;
    match fmt {
        ShapeFormat::Curve => parse_curve(&text),
        ShapeFormat::Obj => parse_obj(&text),
    }
}

/// Save a shape; curves use the `.curve` format, surfaces the OBJ subset.
pub fn save_shape(shape: &SimplicialShape, path: &Path) -> Result<()> {
    let text = match shape.kind() {
        ShapeKind::Curve => write_curve_string(shape),
        ShapeKind::Surface => write_obj_string(shape),
    };
    std::fs::write(path, text)?;
    Ok(())
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::ParseError {
        line,
        msg: msg.into(),
    }
}

/// Parse the `.curve` polyline format.
pub fn parse_curve(text: &str) -> Result<SimplicialShape> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let mut h = header.split_whitespace();
    if h.next() != Some("curve") {
        return Err(bad(hline, "expected header starting with 'curve'"));
    }
    let mut next_usize = |name: &str| -> Result<usize> {
        h.next()
            .ok_or_else(|| bad(hline, format!("missing {name} in header")))?
            .parse()
            .map_err(|_| bad(hline, format!("bad {name} in header")))
    };
    let dim = next_usize("dimension")?;
    let nv = next_usize("vertex count")?;
    let ns = next_usize("segment count")?;
    let closed = match next_usize("closed flag")? {
        0 => false,
        1 => true,
        v => return Err(bad(hline, format!("closed flag must be 0 or 1, got {v}"))),
    };
    let mut vertices = Vec::with_capacity(nv * dim);
    for _ in 0..nv {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| bad(hline, format!("expected {nv} vertex lines")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, format!("bad float '{t}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != dim {
            return Err(bad(ln, format!("expected {dim} coordinates, got {}", vals.len())));
        }
        vertices.extend(vals);
    }
    let mut simplices = Vec::with_capacity(ns * 2);
    for _ in 0..ns {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| bad(hline, format!("expected {ns} segment lines")))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, format!("bad index '{t}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != 2 {
            return Err(bad(ln, format!("expected 2 indices, got {}", vals.len())));
        }
        simplices.extend(vals);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(bad(ln, "trailing content after last segment"));
    }
    SimplicialShape::curve(dim, vertices, simplices, closed)
}

/// Parse the OBJ triangle-mesh subset.
pub fn parse_obj(text: &str) -> Result<SimplicialShape> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let vals: Vec<f64> = tok
                    .map(|t| t.parse().map_err(|_| bad(ln, format!("bad float '{t}'"))))
                    .collect::<Result<_>>()?;
                if vals.len() != 3 {
                    return Err(bad(ln, format!("expected 3 coordinates, got {}", vals.len())));
                }
                vertices.extend(vals);
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        if t.contains('/') {
                            return Err(bad(
                                ln,
                                "texture/normal references ('/') are not supported",
                            ));
                        }
                        let v: usize =
                            t.parse().map_err(|_| bad(ln, format!("bad index '{t}'")))?;
                        if v == 0 {
                            return Err(bad(ln, "face indices are 1-based"));
                        }
                        Ok(v - 1)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad(
                        ln,
                        format!("only triangular faces are supported, got {} indices", idx.len()),
                    ));
                }
                triangles.extend(idx);
            }
            // ignore normals, texture coords, groups, materials, ...
            _ => {}
        }
    }
    SimplicialShape::surface(vertices, triangles)
}

/// Serialize a curve to the `.curve` format.
pub fn write_curve_string(shape: &SimplicialShape) -> String {
    assert_eq!(shape.kind(), ShapeKind::Curve);
    let d = shape.dim();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "curve {} {} {} {}",
        d,
        shape.num_vertices(),
        shape.num_simplices(),
        if shape.is_closed() { 1 } else { 0 }
    );
    for v in shape.vertices().chunks(d) {
        for (k, x) in v.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    for s in shape.simplices().chunks(2) {
        let _ = writeln!(out, "{} {}", s[0], s[1]);
    }
    out
}

/// Serialize a surface to the OBJ subset.
pub fn write_obj_string(shape: &SimplicialShape) -> String {
    assert_eq!(shape.kind(), ShapeKind::Surface);
    let mut out = String::new();
    for v in shape.vertices().chunks(3) {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for s in shape.simplices().chunks(3) {
        let _ = writeln!(out, "f {} {} {}", s[0] + 1, s[1] + 1, s[2] + 1);
    }
    out
}
