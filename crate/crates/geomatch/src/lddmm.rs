//! Landmark-flow ("outer") metric matching.
//!
//! Mesh vertices are advected by an RKHS velocity field spanned by the
//! deformation kernel at the vertices themselves,
//!
//! ```text
//! q̇_i = Σ_j k(|q_i − q_j|²) a_j,
//! ```
//!
//! with kinetic energy `aᵀ𝒦(q)a`. Matching minimizes the integrated energy
//! plus a varifold endpoint penalty, either over the per-step controls
//! (trajectory mode) or over the initial momentum of the reduced
//! Hamiltonian flow (shooting mode, `H̃ = ½ pᵀ𝒦(q)p`). The kernel matrix
//! `𝒦` is never inverted or materialized; everything is evaluated through
//! pairwise sums.

use crate::error::{Error, Result};
use crate::kernels::DeformationKernel;
use crate::ocontrol::{ControlDynamics, EndpointCost, ReducedHamiltonian};
use crate::shapes::{cell_features, CellFeatures, SimplicialShape};
use crate::varifold::{dist_sq_features, grad_features, VarifoldKernel};

/// Velocity field at the vertices: v_i = Σ_j k(|q_i − q_j|²) a_j.
pub fn lddmm_velocity(kernel: &DeformationKernel, q: &[f64], a: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; q.len()];
    velocity_into(kernel, q, a, d, &mut out);
    out
}

/// Accumulate the velocity field into `out`.
pub(crate) fn velocity_into(
    kernel: &DeformationKernel,
    q: &[f64],
    a: &[f64],
    d: usize,
    out: &mut [f64],
) {
    let n = q.len() / d;
    for i in 0..n {
        let qi = &q[i * d..(i + 1) * d];
        for j in 0..n {
            let qj = &q[j * d..(j + 1) * d];
            let k = kernel.scalar(crate::linalg::dist2(qi, qj));
            for c in 0..d {
                out[i * d + c] += k * a[j * d + c];
            }
        }
    }
}

/// The kernel bilinear form bᵀ𝒦(q)c = Σ_ij k(|q_i − q_j|²) b_i·c_j.
pub(crate) fn kernel_quadratic(
    kernel: &DeformationKernel,
    q: &[f64],
    b: &[f64],
    c: &[f64],
    d: usize,
) -> f64 {
    let n = q.len() / d;
    let mut total = 0.0;
    for i in 0..n {
        let qi = &q[i * d..(i + 1) * d];
        let bi = &b[i * d..(i + 1) * d];
        for j in 0..n {
            let qj = &q[j * d..(j + 1) * d];
            let cj = &c[j * d..(j + 1) * d];
            let k = kernel.scalar(crate::linalg::dist2(qi, qj));
            total += k * crate::linalg::dot(bi, cj);
        }
    }
    total
}

/// Accumulate `scale · ∂/∂q [bᵀ𝒦(q)c]` into `out`.
pub(crate) fn kernel_bilinear_q_grad(
    kernel: &DeformationKernel,
    q: &[f64],
    b: &[f64],
    c: &[f64],
    d: usize,
    scale: f64,
    out: &mut [f64],
) {
    let n = q.len() / d;
    for i in 0..n {
        let qi = &q[i * d..(i + 1) * d];
        let bi = &b[i * d..(i + 1) * d];
        for j in 0..n {
            let qj = &q[j * d..(j + 1) * d];
            let cj = &c[j * d..(j + 1) * d];
            let kp = kernel.scalar_deriv(crate::linalg::dist2(qi, qj));
            let s = scale * 2.0 * kp * crate::linalg::dot(bi, cj);
            for cc in 0..d {
                let dq = qi[cc] - qj[cc];
                out[i * d + cc] += s * dq;
                out[j * d + cc] -= s * dq;
            }
        }
    }
}

/// Vector-Jacobian product of the map `(q, b, c) ↦ ∂_q[bᵀ𝒦(q)c]` against a
/// covector `w`: accumulates `scale · ∂/∂(q, b, c) ⟨w, ∂_q[bᵀ𝒦(q)c]⟩` into
/// the three outputs. This is the second-derivative primitive needed by the
/// shooting adjoint of kernel flows.
pub(crate) fn kernel_bilinear_pullback(
    kernel: &DeformationKernel,
    q: &[f64],
    b: &[f64],
    c: &[f64],
    d: usize,
    w: &[f64],
    scale: f64,
    out_q: &mut [f64],
    out_b: &mut [f64],
    out_c: &mut [f64],
) {
    let n = q.len() / d;
    for i in 0..n {
        let qi = &q[i * d..(i + 1) * d];
        let bi = &b[i * d..(i + 1) * d];
        let wi = &w[i * d..(i + 1) * d];
        for j in 0..n {
            let qj = &q[j * d..(j + 1) * d];
            let cj = &c[j * d..(j + 1) * d];
            let wj = &w[j * d..(j + 1) * d];
            let r2 = crate::linalg::dist2(qi, qj);
            let kp = kernel.scalar_deriv(r2);
            let kpp = kernel.scalar_deriv2(r2);
            let beta = crate::linalg::dot(bi, cj);
            // ψ = (q_i − q_j)·(w_i − w_j)
            let mut psi = 0.0;
            for cc in 0..d {
                psi += (qi[cc] - qj[cc]) * (wi[cc] - wj[cc]);
            }
            for cc in 0..d {
                let dq = qi[cc] - qj[cc];
                let dv = scale * (4.0 * kpp * beta * psi * dq + 2.0 * kp * beta * (wi[cc] - wj[cc]));
                out_q[i * d + cc] += dv;
                out_q[j * d + cc] -= dv;
                out_b[i * d + cc] += scale * 2.0 * kp * psi * cj[cc];
                out_c[j * d + cc] += scale * 2.0 * kp * psi * bi[cc];
            }
        }
    }
}

/// The kinetic energy L(q, a) = aᵀ𝒦(q)a ≥ 0.
pub fn lddmm_lagrangian(kernel: &DeformationKernel, q: &[f64], a: &[f64], d: usize) -> f64 {
    kernel_quadratic(kernel, q, a, a, d)
}

/// Smallest pairwise vertex distance; used to flag near-singular kernel
/// matrices in run reports.
pub(crate) fn min_pairwise_distance(q: &[f64], d: usize) -> f64 {
    let n = q.len() / d;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let r2 = crate::linalg::dist2(&q[i * d..(i + 1) * d], &q[j * d..(j + 1) * d]);
            best = best.min(r2.sqrt());
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Trajectory-mode dynamics
// ---------------------------------------------------------------------------

/// Landmark dynamics with per-vertex controls; the running cost is the
/// kernel kinetic energy.
pub struct LandmarkDynamics {
    pub kernel: DeformationKernel,
    pub dim: usize,
    pub num_vertices: usize,
}

impl ControlDynamics for LandmarkDynamics {
    fn state_dim(&self) -> usize {
        self.num_vertices * self.dim
    }
    fn control_dim(&self) -> usize {
        self.num_vertices * self.dim
    }
    fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        velocity_into(&self.kernel, x, u, self.dim, out);
    }
    fn lagrangian(&self, x: &[f64], u: &[f64]) -> f64 {
        lddmm_lagrangian(&self.kernel, x, u, self.dim)
    }
    fn dynamics_pullback(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        out_x: &mut [f64],
        out_u: &mut [f64],
    ) {
        let d = self.dim;
        let n = self.num_vertices;
        for i in 0..n {
            let qi = &x[i * d..(i + 1) * d];
            let wi = &w[i * d..(i + 1) * d];
            for j in 0..n {
                let qj = &x[j * d..(j + 1) * d];
                let aj = &u[j * d..(j + 1) * d];
                let r2 = crate::linalg::dist2(qi, qj);
                let k = self.kernel.scalar(r2);
                let kp = self.kernel.scalar_deriv(r2);
                let s = 2.0 * kp * crate::linalg::dot(wi, aj);
                for c in 0..d {
                    let dq = qi[c] - qj[c];
                    out_x[i * d + c] += s * dq;
                    out_x[j * d + c] -= s * dq;
                    out_u[j * d + c] += k * wi[c];
                }
            }
        }
    }
    fn lagrangian_grad(
        &self,
        x: &[f64],
        u: &[f64],
        scale: f64,
        out_x: &mut [f64],
        out_u: &mut [f64],
    ) {
        let d = self.dim;
        let n = self.num_vertices;
        for i in 0..n {
            let qi = &x[i * d..(i + 1) * d];
            let ai = &u[i * d..(i + 1) * d];
            for j in 0..n {
                let qj = &x[j * d..(j + 1) * d];
                let aj = &u[j * d..(j + 1) * d];
                let r2 = crate::linalg::dist2(qi, qj);
                let k = self.kernel.scalar(r2);
                let kp = self.kernel.scalar_deriv(r2);
                let s = scale * 2.0 * kp * crate::linalg::dot(ai, aj);
                for c in 0..d {
                    let dq = qi[c] - qj[c];
                    out_x[i * d + c] += s * dq;
                    out_x[j * d + c] -= s * dq;
                    out_u[i * d + c] += scale * k * aj[c];
                    out_u[j * d + c] += scale * k * ai[c];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Shooting-mode reduced Hamiltonian
// ---------------------------------------------------------------------------

/// Reduced Hamiltonian H̃(q, p) = ½ pᵀ𝒦(q)p of the landmark system. The
/// running cost along the flow is 2H̃ = pᵀ𝒦p, so the integrated cost equals
/// the kinetic energy ∫ aᵀ𝒦a dt of the induced control a = p.
pub struct LandmarkHamiltonian {
    pub kernel: DeformationKernel,
    pub dim: usize,
    pub num_vertices: usize,
}

impl ReducedHamiltonian for LandmarkHamiltonian {
    fn state_dim(&self) -> usize {
        self.num_vertices * self.dim
    }
    fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        0.5 * kernel_quadratic(&self.kernel, x, p, p, self.dim)
    }
    fn flow(&self, x: &[f64], p: &[f64], dx: &mut [f64], dp: &mut [f64]) {
        let d = self.dim;
        let n = self.num_vertices;
        dx.iter_mut().for_each(|v| *v = 0.0);
        dp.iter_mut().for_each(|v| *v = 0.0);
        velocity_into(&self.kernel, x, p, d, dx);
        // ṗ = −∂_q H̃: accumulated per ordered vertex pair
        for i in 0..n {
            let qi = &x[i * d..(i + 1) * d];
            let pi = &p[i * d..(i + 1) * d];
            for j in 0..n {
                let qj = &x[j * d..(j + 1) * d];
                let pj = &p[j * d..(j + 1) * d];
                let kp = self.kernel.scalar_deriv(crate::linalg::dist2(qi, qj));
                let t = kp * crate::linalg::dot(pi, pj);
                for c in 0..d {
                    let dq = qi[c] - qj[c];
                    dp[i * d + c] -= t * dq;
                    dp[j * d + c] += t * dq;
                }
            }
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
        let n = self.num_vertices;
        for i in 0..n {
            let qi = &x[i * d..(i + 1) * d];
            let pi = &p[i * d..(i + 1) * d];
            let wxi = &wx[i * d..(i + 1) * d];
            let wpi = &wp[i * d..(i + 1) * d];
            for j in 0..n {
                let qj = &x[j * d..(j + 1) * d];
                let pj = &p[j * d..(j + 1) * d];
                let r2 = crate::linalg::dist2(qi, qj);
                let k = self.kernel.scalar(r2);
                let kp = self.kernel.scalar_deriv(r2);
                let kpp = self.kernel.scalar_deriv2(r2);
                let beta = crate::linalg::dot(pi, pj);
                // position equation q̇_i = Σ_j k_ij p_j
                let cg = 2.0 * kp * crate::linalg::dot(wxi, pj);
                // momentum equation ṗ_i = −2 Σ_j k'_ij (p_i·p_j)(q_i − q_j):
                // α = (q_i − q_j)·wp_i
                let mut alpha = 0.0;
                for c in 0..d {
                    alpha += (qi[c] - qj[c]) * wpi[c];
                }
                for c in 0..d {
                    let dq = qi[c] - qj[c];
                    out_q_contrib(out_x, i, j, c, d, cg * dq);
                    out_p[j * d + c] += k * wxi[c];
                    // second-derivative (k'') part of the momentum equation
                    let t_kpp = -4.0 * kpp * beta * alpha * dq;
                    out_q_contrib(out_x, i, j, c, d, t_kpp);
                    // momentum-variation parts
                    out_p[i * d + c] += -2.0 * kp * alpha * pj[c];
                    out_p[j * d + c] += -2.0 * kp * alpha * pi[c];
                    // edge-direction variation part
                    out_q_contrib(out_x, i, j, c, d, -2.0 * kp * beta * wpi[c]);
                }
            }
        }
    }
    fn running_cost(&self, x: &[f64], p: &[f64]) -> f64 {
        kernel_quadratic(&self.kernel, x, p, p, self.dim)
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
        let n = self.num_vertices;
        for i in 0..n {
            let qi = &x[i * d..(i + 1) * d];
            let pi = &p[i * d..(i + 1) * d];
            for j in 0..n {
                let qj = &x[j * d..(j + 1) * d];
                let pj = &p[j * d..(j + 1) * d];
                let r2 = crate::linalg::dist2(qi, qj);
                let k = self.kernel.scalar(r2);
                let kp = self.kernel.scalar_deriv(r2);
                let s = scale * 2.0 * kp * crate::linalg::dot(pi, pj);
                for c in 0..d {
                    let dq = qi[c] - qj[c];
                    out_x[i * d + c] += s * dq;
                    out_x[j * d + c] -= s * dq;
                    out_p[i * d + c] += scale * k * pj[c];
                    out_p[j * d + c] += scale * k * pi[c];
                }
            }
        }
    }
}

/// Signed scatter helper: adds `v` at vertex `i` and subtracts it at `j`.
#[inline]
fn out_q_contrib(out: &mut [f64], i: usize, j: usize, c: usize, d: usize, v: f64) {
    out[i * d + c] += v;
    out[j * d + c] -= v;
}

// ---------------------------------------------------------------------------
// Varifold endpoint penalty
// ---------------------------------------------------------------------------

/// Endpoint cost λ·d²(shape(x), target) where shape(x) reuses the source
/// connectivity with flowed vertex positions. Degenerate or invalid flowed
/// states evaluate to +∞ so line searches back away from them.
pub struct VarifoldEndpoint<'a> {
    template: &'a SimplicialShape,
    target: CellFeatures,
    kernel: &'a VarifoldKernel,
    pub lambda: f64,
}

impl<'a> VarifoldEndpoint<'a> {
    pub fn new(
        template: &'a SimplicialShape,
        target_shape: &SimplicialShape,
        kernel: &'a VarifoldKernel,
        lambda: f64,
    ) -> Result<Self> {
        if template.kind() != target_shape.kind() {
            return Err(Error::KindMismatch(
                template.kind().name().into(),
                target_shape.kind().name().into(),
            ));
        }
        if template.dim() != target_shape.dim() {
            return Err(Error::DimensionMismatch(template.dim(), target_shape.dim()));
        }
        Ok(VarifoldEndpoint {
            template,
            target: cell_features(target_shape)?,
            kernel,
            lambda,
        })
    }

    /// Unweighted squared varifold distance at a flowed state.
    pub fn fidelity(&self, x: &[f64]) -> f64 {
        let shape = match self.template.with_vertices(x.to_vec()) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        match cell_features(&shape) {
            Ok(f) => dist_sq_features(&f, &self.target, self.kernel),
            Err(_) => f64::INFINITY,
        }
    }
}

impl EndpointCost for VarifoldEndpoint<'_> {
    fn cost(&self, x: &[f64]) -> f64 {
        self.lambda * self.fidelity(x)
    }
    fn grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let shape = match self.template.with_vertices(x.to_vec()) {
            Ok(s) => s,
            Err(_) => return,
        };
        let f = match cell_features(&shape) {
            Ok(f) => f,
            Err(_) => return,
        };
        let g = grad_features(&shape, &f, &self.target, self.kernel);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += scale * self.lambda * gi;
        }
    }
}

/// Landmark-flow matching of `q0` onto `q1`. Runs the solver selected in
/// the config (per-step controls or initial-momentum shooting) and returns
/// the optimized flow with its energy log and report.
pub fn match_lddmm(
    q0: &SimplicialShape,
    q1: &SimplicialShape,
    cfg: &crate::config::MatchConfig,
) -> Result<crate::hybrid::FlowMatchResult> {
    if cfg.model != crate::config::Model::Lddmm {
        return Err(Error::InvalidConfig(
            "match_lddmm requires model = lddmm".into(),
        ));
    }
    crate::hybrid::run_flow_match(q0, q1, cfg, None)
}
