//! Hybrid outer + intrinsic metric matching.
//!
//! The hybrid Lagrangian augments the landmark-flow kernel energy with an
//! intrinsic quadratic form evaluated on the velocity field restricted to
//! the shape:
//!
//! ```text
//! L(q, a) = aᵀ𝒦(q)a + weight · Q(q, 𝒦(q)a),
//! ```
//!
//! where Q is a discrete H¹ stiffness assembled simplex-by-simplex: squared
//! edge differences for curves (optionally only their tangential part), the
//! per-triangle piecewise-linear gradient energy for surfaces. Setting
//! `weight = 0` recovers the plain landmark-flow model exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cross3;
use crate::ocontrol::ControlDynamics;
use crate::shapes::{ShapeKind, SimplicialShape, DEGENERACY_THRESHOLD};

/// Which part of the per-edge velocity difference the curve stiffness
/// penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StiffnessVariant {
    /// Full squared difference |h_j - h_i|² per edge.
    Full,
    /// Only the component of h_j - h_i along the edge direction.
    Tangential,
}

/// The intrinsic stiffness term of the hybrid metric: a symmetric positive
/// semi-definite quadratic form on per-vertex vector fields, evaluated
/// simplex-by-simplex (never materialized as a matrix).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntrinsicStiffness {
    /// Nonnegative multiplier of the intrinsic term in the Lagrangian.
    pub weight: f64,
    /// Curve-only choice of difference; ignored for surfaces.
    pub variant: StiffnessVariant,
}

impl Default for IntrinsicStiffness {
    fn default() -> Self {
        IntrinsicStiffness {
            weight: 1.0,
            variant: StiffnessVariant::Full,
        }
    }
}

impl IntrinsicStiffness {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) {
            return Err(Error::InvalidConfig(
                "stiffness weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// H¹ stiffness quadratic form Q(q, h) of a per-vertex field `h` on the
/// shape `q` (flat `num_vertices * dim`).
///
/// Curves: Σ_edges |h_j − h_i|² / ℓ_ij (or the tangential projection of the
/// difference). Surfaces: Σ_tri ‖Σ_v h_v (opposite edge)ᵀ‖²_F / (4A) — the
/// gradient energy of the piecewise-linear interpolant.
pub fn intrinsic_quadform(
    q: &SimplicialShape,
    h: &[f64],
    stiff: &IntrinsicStiffness,
) -> Result<f64> {
    let d = q.dim();
    assert_eq!(h.len(), q.num_vertices() * d, "field shape mismatch");
    check_nondegenerate(q)?;
    Ok(quadform_raw(
        q.kind(),
        d,
        q.vertices(),
        q.simplices(),
        stiff.variant,
        h,
    ))
}

fn check_nondegenerate(q: &SimplicialShape) -> Result<()> {
    match q.kind() {
        ShapeKind::Curve => {
            for s in 0..q.num_simplices() {
                let sx = q.simplex(s);
                let len = crate::linalg::dist2(q.vertex(sx[0]), q.vertex(sx[1])).sqrt();
                if len <= DEGENERACY_THRESHOLD {
                    return Err(Error::DegenerateSimplex {
                        index: s,
                        measure: len,
                    });
                }
            }
        }
        ShapeKind::Surface => {
            for s in 0..q.num_simplices() {
                let sx = q.simplex(s);
                let area = triangle_area(q.vertex(sx[0]), q.vertex(sx[1]), q.vertex(sx[2]));
                if area <= DEGENERACY_THRESHOLD {
                    return Err(Error::DegenerateSimplex {
                        index: s,
                        measure: area,
                    });
                }
            }
        }
    }
    Ok(())
}

fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    0.5 * crate::linalg::norm(&cross3(&e1, &e2))
}

/// Quadratic form on raw arrays; degenerate simplices produce ±inf/NaN
/// rather than errors (callers inside optimization loops treat non-finite
/// objectives as rejected trial points).
pub(crate) fn quadform_raw(
    kind: ShapeKind,
    d: usize,
    vertices: &[f64],
    simplices: &[usize],
    variant: StiffnessVariant,
    h: &[f64],
) -> f64 {
    match kind {
        ShapeKind::Curve => {
            let mut total = 0.0;
            for sx in simplices.chunks_exact(2) {
                let (i, j) = (sx[0], sx[1]);
                let qi = &vertices[i * d..(i + 1) * d];
                let qj = &vertices[j * d..(j + 1) * d];
                let hi = &h[i * d..(i + 1) * d];
                let hj = &h[j * d..(j + 1) * d];
                let mut len2 = 0.0;
                for k in 0..d {
                    let e = qj[k] - qi[k];
                    len2 += e * e;
                }
                let len = len2.sqrt();
                match variant {
                    StiffnessVariant::Full => {
                        let mut dh2 = 0.0;
                        for k in 0..d {
                            let v = hj[k] - hi[k];
                            dh2 += v * v;
                        }
                        total += dh2 / len;
                    }
                    StiffnessVariant::Tangential => {
                        let mut s = 0.0;
                        for k in 0..d {
                            s += (hj[k] - hi[k]) * (qj[k] - qi[k]);
                        }
                        s /= len;
                        total += s * s / len;
                    }
                }
            }
            total
        }
        ShapeKind::Surface => {
            let mut total = 0.0;
            for sx in simplices.chunks_exact(3) {
                total += triangle_gradient_energy(d, vertices, h, sx[0], sx[1], sx[2]);
            }
            total
        }
    }
}

/// ‖G‖²_F / (4A) for one triangle, G = Σ_v h_v ⊗ w_v with w_v the edge
/// opposite vertex v.
fn triangle_gradient_energy(
    d: usize,
    vertices: &[f64],
    h: &[f64],
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    debug_assert_eq!(d, 3);
    let qi = &vertices[i * 3..i * 3 + 3];
    let qj = &vertices[j * 3..j * 3 + 3];
    let qk = &vertices[k * 3..k * 3 + 3];
    let hv = [&h[i * 3..i * 3 + 3], &h[j * 3..j * 3 + 3], &h[k * 3..k * 3 + 3]];
    let w = [
        [qk[0] - qj[0], qk[1] - qj[1], qk[2] - qj[2]],
        [qi[0] - qk[0], qi[1] - qk[1], qi[2] - qk[2]],
        [qj[0] - qi[0], qj[1] - qi[1], qj[2] - qi[2]],
    ];
    let mut g = [0.0; 9];
    for v in 0..3 {
        for r in 0..3 {
            for c in 0..3 {
                g[r * 3 + c] += hv[v][r] * w[v][c];
            }
        }
    }
    let frob2: f64 = g.iter().map(|x| x * x).sum();
    let area = triangle_area(qi, qj, qk);
    frob2 / (4.0 * area)
}

/// Accumulate `scale · ∂Q/∂q` into `gq` and `scale · ∂Q/∂h` into `gh`.
/// Either output may be `None` when not needed.
pub(crate) fn quadform_grad_raw(
    kind: ShapeKind,
    d: usize,
    vertices: &[f64],
    simplices: &[usize],
    variant: StiffnessVariant,
    h: &[f64],
    scale: f64,
    mut gq: Option<&mut [f64]>,
    mut gh: Option<&mut [f64]>,
) {
    match kind {
        ShapeKind::Curve => {
            for sx in simplices.chunks_exact(2) {
                let (i, j) = (sx[0], sx[1]);
                let qi = &vertices[i * d..(i + 1) * d];
                let qj = &vertices[j * d..(j + 1) * d];
                let hi = &h[i * d..(i + 1) * d];
                let hj = &h[j * d..(j + 1) * d];
                let mut e = vec![0.0; d];
                let mut dh = vec![0.0; d];
                let mut len2 = 0.0;
                for k in 0..d {
                    e[k] = qj[k] - qi[k];
                    dh[k] = hj[k] - hi[k];
                    len2 += e[k] * e[k];
                }
                let len = len2.sqrt();
                for v in e.iter_mut() {
                    *v /= len;
                }
                match variant {
                    StiffnessVariant::Full => {
                        let dh2: f64 = dh.iter().map(|x| x * x).sum();
                        if let Some(gh) = gh.as_deref_mut() {
                            for k in 0..d {
                                let t = scale * 2.0 * dh[k] / len;
                                gh[j * d + k] += t;
                                gh[i * d + k] -= t;
                            }
                        }
                        if let Some(gq) = gq.as_deref_mut() {
                            for k in 0..d {
                                let t = scale * dh2 / len2 * e[k];
                                gq[j * d + k] -= t;
                                gq[i * d + k] += t;
                            }
                        }
                    }
                    StiffnessVariant::Tangential => {
                        let s: f64 = (0..d).map(|k| dh[k] * e[k]).sum();
                        if let Some(gh) = gh.as_deref_mut() {
                            for k in 0..d {
                                let t = scale * 2.0 * s * e[k] / len;
                                gh[j * d + k] += t;
                                gh[i * d + k] -= t;
                            }
                        }
                        if let Some(gq) = gq.as_deref_mut() {
                            for k in 0..d {
                                // d(s²/ℓ)/dq_j = 2s(I-eeᵀ)Δh/ℓ² − s²e/ℓ²
                                let perp = dh[k] - s * e[k];
                                let t = scale * (2.0 * s * perp - s * s * e[k]) / len2;
                                gq[j * d + k] += t;
                                gq[i * d + k] -= t;
                            }
                        }
                    }
                }
            }
        }
        ShapeKind::Surface => {
            for sx in simplices.chunks_exact(3) {
                let (i, j, k) = (sx[0], sx[1], sx[2]);
                let qi = &vertices[i * 3..i * 3 + 3];
                let qj = &vertices[j * 3..j * 3 + 3];
                let qk = &vertices[k * 3..k * 3 + 3];
                let hv = [&h[i * 3..i * 3 + 3], &h[j * 3..j * 3 + 3], &h[k * 3..k * 3 + 3]];
                let w = [
                    [qk[0] - qj[0], qk[1] - qj[1], qk[2] - qj[2]],
                    [qi[0] - qk[0], qi[1] - qk[1], qi[2] - qk[2]],
                    [qj[0] - qi[0], qj[1] - qi[1], qj[2] - qi[2]],
                ];
                let mut g = [0.0; 9];
                for v in 0..3 {
                    for r in 0..3 {
                        for c in 0..3 {
                            g[r * 3 + c] += hv[v][r] * w[v][c];
                        }
                    }
                }
                let frob2: f64 = g.iter().map(|x| x * x).sum();
                let e1 = [qj[0] - qi[0], qj[1] - qi[1], qj[2] - qi[2]];
                let e2 = [qk[0] - qi[0], qk[1] - qi[1], qk[2] - qi[2]];
                let n = cross3(&e1, &e2);
                let nn = crate::linalg::norm(&n);
                let area = 0.5 * nn;
                let inv4a = 1.0 / (4.0 * area);

                if let Some(gh) = gh.as_deref_mut() {
                    // ∂/∂h_v = G w_v / (2A)
                    for (v, &vid) in [i, j, k].iter().enumerate() {
                        for r in 0..3 {
                            let mut gw = 0.0;
                            for c in 0..3 {
                                gw += g[r * 3 + c] * w[v][c];
                            }
                            gh[vid * 3 + r] += scale * gw / (2.0 * area);
                        }
                    }
                }
                if let Some(gq) = gq.as_deref_mut() {
                    // Gᵀ h_v terms from the edge vectors: w_i = q_k − q_j etc.
                    let mut gth = [[0.0; 3]; 3];
                    for v in 0..3 {
                        for c in 0..3 {
                            let mut acc = 0.0;
                            for r in 0..3 {
                                acc += g[r * 3 + c] * hv[v][r];
                            }
                            gth[v][c] = acc / (2.0 * area);
                        }
                    }
                    for c in 0..3 {
                        gq[i * 3 + c] += scale * (gth[1][c] - gth[2][c]);
                        gq[j * 3 + c] += scale * (gth[2][c] - gth[0][c]);
                        gq[k * 3 + c] += scale * (gth[0][c] - gth[1][c]);
                    }
                    // area variation: −‖G‖² / (4A²) · ∂A/∂q with
                    // ∂A/∂q_j = ½ e2×n̂, ∂A/∂q_k = ½ n̂×e1
                    let nu = [n[0] / nn, n[1] / nn, n[2] / nn];
                    let da_j = cross3(&e2, &nu);
                    let da_k = cross3(&nu, &e1);
                    let coef = -scale * frob2 * inv4a / area;
                    for c in 0..3 {
                        let aj = 0.5 * da_j[c];
                        let ak = 0.5 * da_k[c];
                        gq[j * 3 + c] += coef * aj;
                        gq[k * 3 + c] += coef * ak;
                        gq[i * 3 + c] -= coef * (aj + ak);
                    }
                }
            }
        }
    }
}

/// Apply the stiffness operator: Λ(q)h = ½ ∂_h Q(q, h).
pub(crate) fn apply_lambda(
    kind: ShapeKind,
    d: usize,
    vertices: &[f64],
    simplices: &[usize],
    variant: StiffnessVariant,
    h: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    quadform_grad_raw(
        kind,
        d,
        vertices,
        simplices,
        variant,
        h,
        0.5,
        None,
        Some(&mut out),
    );
    out
}

/// Accumulate `scale · ∂_q ⟨x, Λ(q) y⟩` into `out` via polarization of the
/// quadratic form: ⟨x,Λy⟩ = ½[Q(x+y) − Q(x) − Q(y)].
pub(crate) fn lambda_bilinear_q_grad(
    kind: ShapeKind,
    d: usize,
    vertices: &[f64],
    simplices: &[usize],
    variant: StiffnessVariant,
    x: &[f64],
    y: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    quadform_grad_raw(kind, d, vertices, simplices, variant, &sum, 0.5 * scale, Some(out), None);
    quadform_grad_raw(kind, d, vertices, simplices, variant, x, -0.5 * scale, Some(out), None);
    quadform_grad_raw(kind, d, vertices, simplices, variant, y, -0.5 * scale, Some(out), None);
}

/// Vector-Jacobian product of `(q, h) ↦ ∂_q Q(q, h)` against `w`:
/// accumulates `scale · ∂/∂(q,h) ⟨w, ∂_q Q⟩`. Needed by the shooting
/// adjoint of the hybrid model; curves only.
pub(crate) fn quadform_qgrad_pullback(
    kind: ShapeKind,
    d: usize,
    vertices: &[f64],
    simplices: &[usize],
    variant: StiffnessVariant,
    h: &[f64],
    w: &[f64],
    scale: f64,
    out_q: &mut [f64],
    out_h: &mut [f64],
) {
    assert_eq!(kind, ShapeKind::Curve, "second-order stiffness pullback is curve-only");
    for sx in simplices.chunks_exact(2) {
        let (i, j) = (sx[0], sx[1]);
        let qi = &vertices[i * d..(i + 1) * d];
        let qj = &vertices[j * d..(j + 1) * d];
        let hi = &h[i * d..(i + 1) * d];
        let hj = &h[j * d..(j + 1) * d];
        let wi = &w[i * d..(i + 1) * d];
        let wj = &w[j * d..(j + 1) * d];
        let mut len2 = 0.0;
        let mut e = vec![0.0; d];
        let mut dh = vec![0.0; d];
        for k in 0..d {
            e[k] = qj[k] - qi[k];
            dh[k] = hj[k] - hi[k];
            len2 += e[k] * e[k];
        }
        let len = len2.sqrt();
        for v in e.iter_mut() {
            *v /= len;
        }
        match variant {
            StiffnessVariant::Full => {
                // φ_edge = |Δh|² (m·u)/|u|³ with m = w_i − w_j, u = q_j − q_i
                let m: Vec<f64> = (0..d).map(|k| wi[k] - wj[k]).collect();
                let sw: f64 = (0..d).map(|k| m[k] * e[k]).sum();
                let dh2: f64 = dh.iter().map(|x| x * x).sum();
                for k in 0..d {
                    let th = scale * 2.0 * dh[k] * sw / len2;
                    out_h[j * d + k] += th;
                    out_h[i * d + k] -= th;
                    let tq = scale * dh2 * (m[k] - 3.0 * sw * e[k]) / (len2 * len);
                    out_q[j * d + k] += tq;
                    out_q[i * d + k] -= tq;
                }
            }
            StiffnessVariant::Tangential => {
                // φ_edge = (2sC − 3s²B)/ℓ², s = Δh·e, B = m̃·e, C = m̃·Δh,
                // m̃ = w_j − w_i
                let mt: Vec<f64> = (0..d).map(|k| wj[k] - wi[k]).collect();
                let s: f64 = (0..d).map(|k| dh[k] * e[k]).sum();
                let b: f64 = (0..d).map(|k| mt[k] * e[k]).sum();
                let c: f64 = (0..d).map(|k| mt[k] * dh[k]).sum();
                let t1 = 2.0 * c - 6.0 * s * b;
                let phi = 2.0 * s * c - 3.0 * s * s * b;
                for k in 0..d {
                    let th = scale * (t1 * e[k] + 2.0 * s * mt[k]) / len2;
                    out_h[j * d + k] += th;
                    out_h[i * d + k] -= th;
                    let tq = scale
                        * (t1 * (dh[k] - s * e[k]) - 3.0 * s * s * (mt[k] - b * e[k])
                            - 2.0 * phi * e[k])
                        / (len2 * len);
                    out_q[j * d + k] += tq;
                    out_q[i * d + k] -= tq;
                }
            }
        }
    }
}

/// The hybrid Lagrangian `aᵀ𝒦(q)a + weight · Q(q, 𝒦(q)a)`.
pub fn hybrid_lagrangian(
    q: &SimplicialShape,
    a: &[f64],
    kernel: &crate::kernels::DeformationKernel,
    stiff: &IntrinsicStiffness,
) -> Result<f64> {
    let d = q.dim();
    let outer = crate::lddmm::lddmm_lagrangian(kernel, q.vertices(), a, d);
    let v = crate::lddmm::lddmm_velocity(kernel, q.vertices(), a, d);
    Ok(outer + stiff.weight * intrinsic_quadform(q, &v, stiff)?)
}

/// [`hybrid_lagrangian`] together with its exact gradients with respect to
/// the vertex positions and the control.
pub fn hybrid_lagrangian_grad(
    q: &SimplicialShape,
    a: &[f64],
    kernel: &crate::kernels::DeformationKernel,
    stiff: &IntrinsicStiffness,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    stiff.validate()?;
    let dynamics = HybridDynamics {
        inner: crate::lddmm::LandmarkDynamics {
            kernel: *kernel,
            dim: q.dim(),
            num_vertices: q.num_vertices(),
        },
        stiffness: Some(StiffnessOps::from_shape(stiff, q)),
    };
    let value = hybrid_lagrangian(q, a, kernel, stiff)?;
    let mut gq = vec![0.0; q.vertices().len()];
    let mut ga = vec![0.0; a.len()];
    dynamics.lagrangian_grad(q.vertices(), a, 1.0, &mut gq, &mut ga);
    Ok((value, gq, ga))
}

// ---------------------------------------------------------------------------
// Controlled dynamics and reduced Hamiltonian
// ---------------------------------------------------------------------------

/// Connectivity and weight data the flow solvers need from a shape.
#[derive(Debug, Clone)]
pub(crate) struct StiffnessOps {
    pub weight: f64,
    pub variant: StiffnessVariant,
    pub kind: ShapeKind,
    pub simplices: Vec<usize>,
}

impl StiffnessOps {
    pub(crate) fn from_shape(stiff: &IntrinsicStiffness, shape: &SimplicialShape) -> Self {
        StiffnessOps {
            weight: stiff.weight,
            variant: stiff.variant,
            kind: shape.kind(),
            simplices: shape.simplices().to_vec(),
        }
    }
}

/// Landmark dynamics with an optional intrinsic stiffness added to the
/// running cost. With `stiffness: None` this is exactly the plain
/// landmark-flow model (shared code path for both solvers).
pub struct HybridDynamics {
    pub(crate) inner: crate::lddmm::LandmarkDynamics,
    pub(crate) stiffness: Option<StiffnessOps>,
}

impl HybridDynamics {
    /// (kernel energy, weighted intrinsic energy) at one state/control pair.
    pub(crate) fn lagrangian_parts(&self, x: &[f64], u: &[f64]) -> (f64, f64) {
        let outer = self.inner.lagrangian(x, u);
        let intr = match &self.stiffness {
            Some(ops) => {
                let v = crate::lddmm::lddmm_velocity(&self.inner.kernel, x, u, self.inner.dim);
                ops.weight
                    * quadform_raw(ops.kind, self.inner.dim, x, &ops.simplices, ops.variant, &v)
            }
            None => 0.0,
        };
        (outer, intr)
    }
}

impl crate::ocontrol::ControlDynamics for HybridDynamics {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }
    fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.inner.dynamics(x, u, out);
    }
    fn lagrangian(&self, x: &[f64], u: &[f64]) -> f64 {
        let (outer, intr) = self.lagrangian_parts(x, u);
        outer + intr
    }
    fn dynamics_pullback(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        out_x: &mut [f64],
        out_u: &mut [f64],
    ) {
        self.inner.dynamics_pullback(x, u, w, out_x, out_u);
    }
    fn lagrangian_grad(
        &self,
        x: &[f64],
        u: &[f64],
        scale: f64,
        out_x: &mut [f64],
        out_u: &mut [f64],
    ) {
        self.inner.lagrangian_grad(x, u, scale, out_x, out_u);
        if let Some(ops) = &self.stiffness {
            let d = self.inner.dim;
            let v = crate::lddmm::lddmm_velocity(&self.inner.kernel, x, u, d);
            // explicit q-dependence of Q plus its h-gradient, to be pulled
            // back through v = 𝒦(q)u
            let mut gh = vec![0.0; v.len()];
            quadform_grad_raw(
                ops.kind,
                d,
                x,
                &ops.simplices,
                ops.variant,
                &v,
                scale * ops.weight,
                Some(out_x),
                Some(&mut gh),
            );
            self.inner.dynamics_pullback(x, u, &gh, out_x, out_u);
        }
    }
}

/// Reduced Hamiltonian of the hybrid metric:
///
/// ```text
/// H̃(q, p) = ½ pᵀ𝒦(q) a,    (I + weight·Λ(q)𝒦(q)) a = p,
/// ```
///
/// so that the running cost 2H̃ equals the hybrid Lagrangian along the flow.
/// With no stiffness the solve disappears (a = p) and this reduces exactly
/// to the landmark Hamiltonian. The linear solve uses a dense LU per
/// evaluation; shooting under stiffness is supported for curves.
pub struct HybridHamiltonian {
    pub(crate) kernel: crate::kernels::DeformationKernel,
    pub(crate) dim: usize,
    pub(crate) num_vertices: usize,
    pub(crate) stiffness: Option<StiffnessOps>,
}

impl HybridHamiltonian {
    fn nd(&self) -> usize {
        self.dim * self.num_vertices
    }

    /// Assemble M = I + weight·Λ(q)𝒦(q) column by column.
    fn assemble_m(&self, x: &[f64], ops: &StiffnessOps) -> Vec<f64> {
        let nd = self.nd();
        let mut m = vec![0.0; nd * nd];
        let mut basis = vec![0.0; nd];
        for col in 0..nd {
            basis[col] = 1.0;
            let mut kv = vec![0.0; nd];
            crate::lddmm::velocity_into(&self.kernel, x, &basis, self.dim, &mut kv);
            let lv = apply_lambda(ops.kind, self.dim, x, &ops.simplices, ops.variant, &kv);
            for row in 0..nd {
                m[row * nd + col] = ops.weight * lv[row];
            }
            m[col * nd + col] += 1.0;
            basis[col] = 0.0;
        }
        m
    }

    /// Solve for the control a(q, p); the factorization is returned for
    /// adjoint reuse (None when no stiffness is present).
    fn compute_a(&self, x: &[f64], p: &[f64]) -> (Option<crate::linalg::LuFactor>, Vec<f64>) {
        match &self.stiffness {
            None => (None, p.to_vec()),
            Some(ops) => {
                let m = self.assemble_m(x, ops);
                match crate::linalg::LuFactor::new(m, self.nd()) {
                    Some(f) => {
                        let a = f.solve(p);
                        (Some(f), a)
                    }
                    // singular system: poison the output so the integrator
                    // reports a non-finite state instead of wrong numbers
                    None => (None, vec![f64::NAN; p.len()]),
                }
            }
        }
    }

    /// (kernel part, weighted intrinsic part) of the running cost.
    pub(crate) fn running_parts(&self, x: &[f64], p: &[f64]) -> (f64, f64) {
        let (_, a) = self.compute_a(x, p);
        let outer = crate::lddmm::kernel_quadratic(&self.kernel, x, &a, &a, self.dim);
        let intr = match &self.stiffness {
            Some(ops) => {
                let v = crate::lddmm::lddmm_velocity(&self.kernel, x, &a, self.dim);
                ops.weight * quadform_raw(ops.kind, self.dim, x, &ops.simplices, ops.variant, &v)
            }
            None => 0.0,
        };
        (outer, intr)
    }
}

impl crate::ocontrol::ReducedHamiltonian for HybridHamiltonian {
    fn state_dim(&self) -> usize {
        self.nd()
    }
    fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        let (_, a) = self.compute_a(x, p);
        let v = crate::lddmm::lddmm_velocity(&self.kernel, x, &a, self.dim);
        0.5 * crate::linalg::dot(p, &v)
    }
    fn flow(&self, x: &[f64], p: &[f64], dx: &mut [f64], dp: &mut [f64]) {
        let d = self.dim;
        let (_, a) = self.compute_a(x, p);
        dx.iter_mut().for_each(|v| *v = 0.0);
        dp.iter_mut().for_each(|v| *v = 0.0);
        crate::lddmm::velocity_into(&self.kernel, x, &a, d, dx);
        // ṗ = −∂_q H̃ = −½[D(q;p,a) − W·E(q;v) − W·D(q;Λv,a)]
        crate::lddmm::kernel_bilinear_q_grad(&self.kernel, x, p, &a, d, -0.5, dp);
        if let Some(ops) = &self.stiffness {
            let w = ops.weight;
            quadform_grad_raw(
                ops.kind,
                d,
                x,
                &ops.simplices,
                ops.variant,
                dx, // v = 𝒦a is already in dx
                0.5 * w,
                Some(dp),
                None,
            );
            let u = apply_lambda(ops.kind, d, x, &ops.simplices, ops.variant, dx);
            crate::lddmm::kernel_bilinear_q_grad(&self.kernel, x, &u, &a, d, 0.5 * w, dp);
        }
    }
    fn flow_pullback(
        &self,
        x: &[f64],
        p: &[f64],
        wx: &[f64],
        wp: &[f64],
        out_x: &mut [f64],
        out_p: &mut [f64],
    ) {
        let d = self.dim;
        let ops = match &self.stiffness {
            None => {
                // exact landmark special case
                let plain = crate::lddmm::LandmarkHamiltonian {
                    kernel: self.kernel,
                    dim: d,
                    num_vertices: self.num_vertices,
                };
                return plain.flow_pullback(x, p, wx, wp, out_x, out_p);
            }
            Some(ops) => ops,
        };
        let nd = self.nd();
        let w = ops.weight;
        let (factor, a) = self.compute_a(x, p);
        let factor = match factor {
            Some(f) => f,
            None => return,
        };
        let v = crate::lddmm::lddmm_velocity(&self.kernel, x, &a, d);
        let u = apply_lambda(ops.kind, d, x, &ops.simplices, ops.variant, &v);

        let mut adj_a = vec![0.0; nd];
        let mut adj_v = vec![0.0; nd];
        let mut adj_u = vec![0.0; nd];

        // momentum equation F2 = −½D(q;p,a) + ½W·E(q;v) + ½W·D(q;u,a)
        crate::lddmm::kernel_bilinear_pullback(
            &self.kernel, x, p, &a, d, wp, -0.5, out_x, out_p, &mut adj_a,
        );
        crate::lddmm::kernel_bilinear_pullback(
            &self.kernel, x, &u, &a, d, wp, 0.5 * w, out_x, &mut adj_u, &mut adj_a,
        );
        quadform_qgrad_pullback(
            ops.kind, d, x, &ops.simplices, ops.variant, &v, wp, 0.5 * w, out_x, &mut adj_v,
        );

        // position equation F1 = v
        crate::linalg::axpy(1.0, wx, &mut adj_v);

        // u = Λ(q) v
        let lam_adj_u = apply_lambda(ops.kind, d, x, &ops.simplices, ops.variant, &adj_u);
        crate::linalg::axpy(1.0, &lam_adj_u, &mut adj_v);
        lambda_bilinear_q_grad(
            ops.kind, d, x, &ops.simplices, ops.variant, &adj_u, &v, 1.0, out_x,
        );

        // v = 𝒦(q) a
        crate::lddmm::velocity_into(&self.kernel, x, &adj_v, d, &mut adj_a);
        crate::lddmm::kernel_bilinear_q_grad(&self.kernel, x, &adj_v, &a, d, 1.0, out_x);

        // a = M⁻¹p with M = I + W·Λ𝒦
        let y = factor.solve_transposed(&adj_a);
        crate::linalg::axpy(1.0, &y, out_p);
        lambda_bilinear_q_grad(ops.kind, d, x, &ops.simplices, ops.variant, &y, &v, -w, out_x);
        let z = apply_lambda(ops.kind, d, x, &ops.simplices, ops.variant, &y);
        crate::lddmm::kernel_bilinear_q_grad(&self.kernel, x, &z, &a, d, -w, out_x);
    }
    fn running_cost(&self, x: &[f64], p: &[f64]) -> f64 {
        let (_, a) = self.compute_a(x, p);
        let v = crate::lddmm::lddmm_velocity(&self.kernel, x, &a, self.dim);
        crate::linalg::dot(p, &v)
    }
    fn running_cost_grad(
        &self,
        x: &[f64],
        p: &[f64],
        scale: f64,
        out_x: &mut [f64],
        out_p: &mut [f64],
    ) {
        let d = self.dim;
        let (_, a) = self.compute_a(x, p);
        let v = crate::lddmm::lddmm_velocity(&self.kernel, x, &a, d);
        // ∂(2H̃)/∂p = 2𝒦a, ∂(2H̃)/∂q = D(q;p,a) − W·E(q;v) − W·D(q;Λv,a)
        crate::linalg::axpy(2.0 * scale, &v, out_p);
        crate::lddmm::kernel_bilinear_q_grad(&self.kernel, x, p, &a, d, scale, out_x);
        if let Some(ops) = &self.stiffness {
            let w = ops.weight;
            quadform_grad_raw(
                ops.kind,
                d,
                x,
                &ops.simplices,
                ops.variant,
                &v,
                -scale * w,
                Some(out_x),
                None,
            );
            let u = apply_lambda(ops.kind, d, x, &ops.simplices, ops.variant, &v);
            crate::lddmm::kernel_bilinear_q_grad(&self.kernel, x, &u, &a, d, -scale * w, out_x);
        }
    }
}

// ---------------------------------------------------------------------------
// Matching driver shared by the plain and hybrid flow models
// ---------------------------------------------------------------------------

/// Result of a flow-based matching run (plain or hybrid model).
#[derive(Debug, Clone)]
pub struct FlowMatchResult {
    /// Final flowed trajectory on the integration grid.
    pub trajectory: crate::ocontrol::Trajectory,
    /// Optimized per-step controls (trajectory mode), flat steps×N_V×d.
    pub controls: Option<Vec<f64>>,
    /// Optimized initial momentum (shooting mode), flat N_V×d.
    pub p0: Option<Vec<f64>>,
    /// Shapes sampled at the configured frame times.
    pub frames: Vec<(f64, SimplicialShape)>,
    pub energy_log: Vec<crate::config::EnergyRow>,
    pub report: crate::config::MatchReport,
}

/// Shared solver behind `match_lddmm` and `match_hybrid`; the two differ
/// only in whether an intrinsic stiffness contributes to the running cost.
pub(crate) fn run_flow_match(
    q0: &SimplicialShape,
    q1: &SimplicialShape,
    cfg: &crate::config::MatchConfig,
    stiffness: Option<IntrinsicStiffness>,
) -> Result<FlowMatchResult> {
    use crate::config::{EnergyRow, MatchReport, SolverMode};
    use crate::ocontrol;

    cfg.validate()?;
    let started = std::time::Instant::now();
    let d = q0.dim();
    let n = q0.num_vertices();
    let sigma = cfg.resolve_sigma(q0);
    let kernel = crate::kernels::DeformationKernel::new(sigma);
    let vkernel = cfg.varifold.kernel();
    let endpoint = crate::lddmm::VarifoldEndpoint::new(q0, q1, &vkernel, cfg.lambda)?;
    let x0 = q0.vertices().to_vec();
    let hybrid_mode = stiffness.is_some();
    if hybrid_mode
        && cfg.solver == SolverMode::Shooting
        && q0.kind() == ShapeKind::Surface
    {
        return Err(Error::InvalidConfig(
            "hybrid shooting is implemented for curves only; use the trajectory solver".into(),
        ));
    }
    let ops = stiffness.map(|s| StiffnessOps::from_shape(&s, q0));
    let initial_fidelity = endpoint.fidelity(&x0);
    let opts = cfg.optim.to_options();
    let mut log: Vec<EnergyRow> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    let (trajectory, controls, p0, opt_f, opt_status, opt_iters) = match cfg.solver {
        SolverMode::Trajectory => {
            let steps = cfg.discretization.time_steps;
            let dynamics = HybridDynamics {
                inner: crate::lddmm::LandmarkDynamics {
                    kernel,
                    dim: d,
                    num_vertices: n,
                },
                stiffness: ops,
            };
            let u0 = vec![0.0; steps * n * d];
            let objective = |u: &[f64]| match ocontrol::trajectory_objective(
                &dynamics, &endpoint, &x0, u, steps,
            ) {
                Ok(fg) => fg,
                Err(_) => (f64::INFINITY, vec![0.0; u.len()]),
            };
            let h = 1.0 / steps as f64;
            let on_iterate = |iter: usize, u: &[f64], f: f64, _g: f64| {
                if let Ok(traj) = ocontrol::rollout(&dynamics, &x0, u, steps) {
                    let fid = endpoint.fidelity(traj.state(steps));
                    let (outer, intr) = if hybrid_mode {
                        let mut o = 0.0;
                        let mut s = 0.0;
                        for k in 0..steps {
                            let (ok, sk) =
                                dynamics.lagrangian_parts(traj.state(k), &u[k * n * d..(k + 1) * n * d]);
                            o += h * ok;
                            s += h * sk;
                        }
                        (Some(o), Some(s))
                    } else {
                        (None, None)
                    };
                    log.push(EnergyRow {
                        iter,
                        energy: traj.running_cost,
                        fidelity: fid,
                        total: f,
                        outer_energy: outer,
                        intrinsic_energy: intr,
                    });
                }
            };
            let result = crate::optim::minimize_with_callback(objective, &u0, &opts, on_iterate)?;
            let traj = ocontrol::rollout(&dynamics, &x0, &result.x, steps)?;
            (
                traj,
                Some(result.x),
                None,
                result.f,
                result.status,
                result.iterations,
            )
        }
        SolverMode::Shooting => {
            let steps = cfg.discretization.integration_steps;
            let ham = HybridHamiltonian {
                kernel,
                dim: d,
                num_vertices: n,
                stiffness: ops,
            };
            let p_init = vec![0.0; n * d];
            let objective = |p: &[f64]| match ocontrol::shoot_objective(
                &ham, &endpoint, &x0, p, steps,
            ) {
                Ok(fg) => fg,
                Err(_) => (f64::INFINITY, vec![0.0; p.len()]),
            };
            let h = 1.0 / steps as f64;
            let on_iterate = |iter: usize, p: &[f64], f: f64, _g: f64| {
                if let Ok(traj) = ocontrol::integrate_reduced(&ham, &x0, p, steps) {
                    let fid = endpoint.fidelity(traj.state(steps));
                    let (outer, intr) = if hybrid_mode {
                        let mut o = 0.0;
                        let mut s = 0.0;
                        for k in 0..=steps {
                            let wq = if k == 0 || k == steps { 0.5 } else { 1.0 };
                            let (ok, sk) =
                                ham.running_parts(traj.state(k), traj.costate(k).unwrap());
                            o += h * wq * ok;
                            s += h * wq * sk;
                        }
                        (Some(o), Some(s))
                    } else {
                        (None, None)
                    };
                    log.push(EnergyRow {
                        iter,
                        energy: traj.running_cost,
                        fidelity: fid,
                        total: f,
                        outer_energy: outer,
                        intrinsic_energy: intr,
                    });
                }
            };
            let result =
                crate::optim::minimize_with_callback(objective, &p_init, &opts, on_iterate)?;
            let traj = ocontrol::integrate_reduced(&ham, &x0, &result.x, steps)?;
            (
                traj,
                None,
                Some(result.x),
                result.f,
                result.status,
                result.iterations,
            )
        }
    };

    // conditioning warning for near-coincident vertices anywhere on the path
    let mut min_dist = f64::INFINITY;
    for k in 0..=trajectory.steps() {
        min_dist = min_dist.min(crate::lddmm::min_pairwise_distance(trajectory.state(k), d));
    }
    if min_dist < 1e-8 * sigma {
        warnings.push(format!(
            "near-singular kernel matrix: minimum vertex distance {min_dist:.3e} below 1e-8·sigma"
        ));
    }

    let mut frames = Vec::new();
    for &t in &cfg.output.frame_times {
        let xs = trajectory.sample_state(t);
        match q0.with_vertices(xs) {
            Ok(s) => frames.push((t, s)),
            Err(e) => warnings.push(format!("frame at t={t} is degenerate: {e}")),
        }
    }

    let final_fidelity = endpoint.fidelity(trajectory.state(trajectory.steps()));
    let (outer_energy, intrinsic_energy) = match log.last() {
        Some(row) if hybrid_mode => (row.outer_energy, row.intrinsic_energy),
        _ => (None, None),
    };
    let report = MatchReport {
        model: cfg.model.name().into(),
        solver: cfg.solver.name().into(),
        energy: trajectory.running_cost,
        fidelity: final_fidelity,
        total: opt_f,
        initial_fidelity,
        outer_energy,
        intrinsic_energy,
        fit_residual: None,
        resolved_sigma: Some(sigma),
        iterations: opt_iters,
        status: opt_status.name().into(),
        warnings: warnings.clone(),
        timing_seconds: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok(FlowMatchResult {
        trajectory,
        controls,
        p0,
        frames,
        energy_log: log,
        report,
    })
}

/// Hybrid-metric matching: identical solver structure to the plain flow
/// model with the stiffness term added to the running cost.
pub fn match_hybrid(
    q0: &SimplicialShape,
    q1: &SimplicialShape,
    cfg: &crate::config::MatchConfig,
) -> Result<FlowMatchResult> {
    if cfg.model != crate::config::Model::Hybrid {
        return Err(Error::InvalidConfig(
            "match_hybrid requires model = hybrid".into(),
        ));
    }
    run_flow_match(q0, q1, cfg, Some(cfg.stiffness))
}
