//! Discrete shapes: oriented polylines and triangle meshes.
//!
//! A [`SimplicialShape`] is the common input type for every matching model in
//! this crate: an ordered vertex list in R^2 or R^3 plus oriented simplices
//! (index pairs for curves, index triples for surfaces). Construction
//! validates the combinatorics and rejects degenerate simplices, so the
//! numerical layers can assume well-formed data.

use crate::error::{Error, Result};
use crate::linalg::cross3;
use std::collections::HashMap;

/// Minimum admissible simplex measure (segment length / triangle area).
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Tolerance for the orthogonality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Curve,
    Surface,
}

impl ShapeKind {
    pub fn vertices_per_simplex(self) -> usize {
        match self {
            ShapeKind::Curve => 2,
            ShapeKind::Surface => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Curve => "curve",
            ShapeKind::Surface => "surface",
        }
    }
}

/// An oriented simplicial shape, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialShape {
    dim: usize,
    kind: ShapeKind,
    closed: bool,
    /// Flat `num_vertices * dim` coordinate array.
    vertices: Vec<f64>,
    /// Flat `num_simplices * vertices_per_simplex` index array.
    simplices: Vec<usize>,
}

impl SimplicialShape {
    /// General constructor; prefer [`SimplicialShape::curve`] /
    /// [`SimplicialShape::surface`] in user code.
    pub fn new(
        dim: usize,
        kind: ShapeKind,
        closed: bool,
        vertices: Vec<f64>,
        simplices: Vec<usize>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidShape(format!(
                "ambient dimension must be 2 or 3, got {dim}"
            )));
        }
        if kind == ShapeKind::Surface && dim != 3 {
            return Err(Error::InvalidShape(
                "surfaces require ambient dimension 3".into(),
            ));
        }
        if vertices.len() % dim != 0 {
            return Err(Error::InvalidShape(format!(
                "vertex array length {} is not a multiple of dim {dim}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("non-finite vertex coordinate".into()));
        }
        let nv = vertices.len() / dim;
        let k = kind.vertices_per_simplex();
        if simplices.len() % k != 0 {
            return Err(Error::InvalidShape(format!(
                "simplex array length {} is not a multiple of {k}",
                simplices.len()
            )));
        }
        let ns = simplices.len() / k;
        if ns == 0 {
            return Err(Error::InvalidShape("shape has no simplices".into()));
        }
        for (s, sx) in simplices.chunks(k).enumerate() {
            for &i in sx {
                if i >= nv {
                    return Err(Error::InvalidShape(format!(
                        "simplex {s} references vertex {i} but only {nv} vertices exist"
                    )));
                }
            }
            for a in 0..k {
                for b in a + 1..k {
                    if sx[a] == sx[b] {
                        return Err(Error::InvalidShape(format!(
                            "simplex {s} repeats vertex {}",
                            sx[a]
                        )));
                    }
                }
            }
        }
        let shape = SimplicialShape {
            dim,
            kind,
            closed: closed && kind == ShapeKind::Curve,
            vertices,
            simplices,
        };
        for s in 0..ns {
            let m = shape.simplex_measure(s);
            if !(m > DEGENERACY_THRESHOLD) {
                return Err(Error::DegenerateSimplex {
                    index: s,
                    measure: m,
                });
            }
        }
        if shape.closed {
            // A consistently oriented closed polyline uses every vertex exactly
            // once as a segment tail and once as a head.
            let mut tails = vec![0usize; nv];
            let mut heads = vec![0usize; nv];
            for sx in shape.simplices.chunks(2) {
                tails[sx[0]] += 1;
                heads[sx[1]] += 1;
            }
            for i in 0..nv {
                if tails[i] != 1 || heads[i] != 1 {
                    return Err(Error::InvalidShape(format!(
                        "closed curve orientation is inconsistent at vertex {i} \
                         (tail count {}, head count {})",
                        tails[i], heads[i]
                    )));
                }
            }
        }
        Ok(shape)
    }

    pub fn curve(dim: usize, vertices: Vec<f64>, segments: Vec<usize>, closed: bool) -> Result<Self> {
        Self::new(dim, ShapeKind::Curve, closed, vertices, segments)
    }

    pub fn surface(vertices: Vec<f64>, triangles: Vec<usize>) -> Result<Self> {
        Self::new(3, ShapeKind::Surface, false, vertices, triangles)
    }

    /// Convenience: an open or closed polyline visiting the vertices in order.
    pub fn polyline(dim: usize, vertices: Vec<f64>, closed: bool) -> Result<Self> {
        let nv = vertices.len() / dim.max(1);
        let mut segs = Vec::new();
        for i in 0..nv.saturating_sub(1) {
            segs.push(i);
            segs.push(i + 1);
        }
        if closed && nv >= 2 {
            segs.push(nv - 1);
            segs.push(0);
        }
        Self::curve(dim, vertices, segs, closed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ShapeKind {
        self.kind
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len() / self.kind.vertices_per_simplex()
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn simplices(&self) -> &[usize] {
        &self.simplices
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.dim..(i + 1) * self.dim]
    }

    pub fn simplex(&self, s: usize) -> &[usize] {
        let k = self.kind.vertices_per_simplex();
        &self.simplices[s * k..(s + 1) * k]
    }

    /// A copy of this shape with the vertex coordinates replaced (the
    /// combinatorics are kept). Validates the result.
    pub fn with_vertices(&self, vertices: Vec<f64>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidShape(format!(
                "expected {} coordinates, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Self::new(self.dim, self.kind, self.closed, vertices, self.simplices.clone())
    }

    /// Segment length or triangle area of simplex `s`.
    fn simplex_measure(&self, s: usize) -> f64 {
        let sx = self.simplex(s);
        match self.kind {
            ShapeKind::Curve => {
                let a = self.vertex(sx[0]);
                let b = self.vertex(sx[1]);
                crate::linalg::dist2(a, b).sqrt()
            }
            ShapeKind::Surface => {
                let a = self.vertex(sx[0]);
                let b = self.vertex(sx[1]);
                let c = self.vertex(sx[2]);
                let e1: Vec<f64> = (0..3).map(|k| b[k] - a[k]).collect();
                let e2: Vec<f64> = (0..3).map(|k| c[k] - a[k]).collect();
                let n = cross3(&e1, &e2);
                0.5 * crate::linalg::norm(&n)
            }
        }
    }

    /// Diagonal of the axis-aligned bounding box (used for kernel-width
    /// defaults).
    pub fn bbox_diagonal(&self) -> f64 {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for v in self.vertices.chunks(d) {
            for k in 0..d {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (0..d).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Apply `x -> R x + b`. `r` is a row-major `dim x dim` rotation matrix,
    /// checked to be orthogonal with determinant +1 within `1e-10`.
    pub fn rigid_transform(&self, r: &[f64], b: &[f64]) -> Result<Self> {
        let d = self.dim;
        if r.len() != d * d || b.len() != d {
            return Err(Error::NotARotation(format!(
                "expected a {d}x{d} matrix and a {d}-vector"
            )));
        }
        // R^T R == I
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += r[k * d + i] * r[k * d + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                if (s - target).abs() > ROTATION_TOL {
                    return Err(Error::NotARotation(format!(
                        "R^T R deviates from identity by {:.3e} at ({i},{j})",
                        (s - target).abs()
                    )));
                }
            }
        }
        let det = match d {
            2 => r[0] * r[3] - r[1] * r[2],
            _ => {
                r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6])
                    + r[2] * (r[3] * r[7] - r[4] * r[6])
            }
        };
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotARotation(format!(
                "determinant {det:.12} is not +1"
            )));
        }
        let mut verts = vec![0.0; self.vertices.len()];
        for (vi, v) in self.vertices.chunks(d).enumerate() {
            for i in 0..d {
                let mut s = b[i];
                for j in 0..d {
                    s += r[i * d + j] * v[j];
                }
                verts[vi * d + i] = s;
            }
        }
        Self::new(d, self.kind, self.closed, verts, self.simplices.clone())
    }

    /// Uniform refinement: each segment splits at its midpoint, each triangle
    /// splits into four via edge midpoints (midpoints of shared edges are
    /// shared). Orientation is inherited from the parent simplex.
    pub fn subdivide(&self) -> Result<Self> {
        let d = self.dim;
        let mut verts = self.vertices.clone();
        let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |i: usize, j: usize, verts: &mut Vec<f64>| -> usize {
            let key = (i.min(j), i.max(j));
            if let Some(&m) = midpoint_of.get(&key) {
                return m;
            }
            let m = verts.len() / d;
            for k in 0..d {
                let v = 0.5 * (self.vertices[i * d + k] + self.vertices[j * d + k]);
                verts.push(v);
            }
            midpoint_of.insert(key, m);
            m
        };
        let mut simplices = Vec::new();
        match self.kind {
            ShapeKind::Curve => {
                for sx in self.simplices.chunks(2) {
                    let (i, j) = (sx[0], sx[1]);
                    let m = midpoint(i, j, &mut verts);
                    simplices.extend_from_slice(&[i, m, m, j]);
                }
            }
            ShapeKind::Surface => {
                for sx in self.simplices.chunks(3) {
                    let (i, j, k) = (sx[0], sx[1], sx[2]);
                    let mij = midpoint(i, j, &mut verts);
                    let mjk = midpoint(j, k, &mut verts);
                    let mki = midpoint(k, i, &mut verts);
                    simplices.extend_from_slice(&[i, mij, mki]);
                    simplices.extend_from_slice(&[mij, j, mjk]);
                    simplices.extend_from_slice(&[mki, mjk, k]);
                    simplices.extend_from_slice(&[mij, mjk, mki]);
                }
            }
        }
        Self::new(d, self.kind, self.closed, verts, simplices)
    }
}

/// Per-simplex quantities used by the varifold layer: barycenter, unit
/// orientation (tangent for segments, normal for triangles) and measure
/// (length or area).
#[derive(Debug, Clone)]
pub struct CellFeatures {
    pub dim: usize,
    /// Flat `num_simplices * dim`.
    pub barycenters: Vec<f64>,
    /// Flat `num_simplices * dim`, unit vectors.
    pub orientations: Vec<f64>,
    pub measures: Vec<f64>,
}

impl CellFeatures {
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn barycenter(&self, s: usize) -> &[f64] {
        &self.barycenters[s * self.dim..(s + 1) * self.dim]
    }

    pub fn orientation(&self, s: usize) -> &[f64] {
        &self.orientations[s * self.dim..(s + 1) * self.dim]
    }
}

/// Compute [`CellFeatures`] for every simplex of `shape`.
///
/// For a segment (i, j): barycenter (q_i + q_j)/2, orientation
/// (q_j - q_i)/|q_j - q_i|, measure |q_j - q_i|. For a triangle (i, j, k)
/// with n = (q_j - q_i) x (q_k - q_i): barycenter (q_i + q_j + q_k)/3,
/// orientation n/|n|, measure |n|/2.
pub fn cell_features(shape: &SimplicialShape) -> Result<CellFeatures> {
    let d = shape.dim();
    let ns = shape.num_simplices();
    let mut barycenters = vec![0.0; ns * d];
    let mut orientations = vec![0.0; ns * d];
    let mut measures = vec![0.0; ns];
    for s in 0..ns {
        let sx = shape.simplex(s);
        match shape.kind() {
            ShapeKind::Curve => {
                let a = shape.vertex(sx[0]);
                let b = shape.vertex(sx[1]);
                let len = crate::linalg::dist2(a, b).sqrt();
                if !(len > DEGENERACY_THRESHOLD) {
                    return Err(Error::DegenerateSimplex {
                        index: s,
                        measure: len,
                    });
                }
                for k in 0..d {
                    barycenters[s * d + k] = 0.5 * (a[k] + b[k]);
                    orientations[s * d + k] = (b[k] - a[k]) / len;
                }
                measures[s] = len;
            }
            ShapeKind::Surface => {
                let a = shape.vertex(sx[0]);
                let b = shape.vertex(sx[1]);
                let c = shape.vertex(sx[2]);
                let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let n = cross3(&e1, &e2);
                let nn = crate::linalg::norm(&n);
                let area = 0.5 * nn;
                if !(area > DEGENERACY_THRESHOLD) {
                    return Err(Error::DegenerateSimplex {
                        index: s,
                        measure: area,
                    });
                }
                for k in 0..3 {
                    barycenters[s * 3 + k] = (a[k] + b[k] + c[k]) / 3.0;
                    orientations[s * 3 + k] = n[k] / nn;
                }
                measures[s] = area;
            }
        }
    }
    Ok(CellFeatures {
        dim: d,
        barycenters,
        orientations,
        measures,
    })
}
