//! Intrinsic Sobolev-metric geodesic matching for curves.
//!
//! A path of curves c(t, θ) is represented as a tensor-product B-spline and
//! the Riemannian path energy of a constant-coefficient Sobolev metric is
//! minimized over the control points, with a varifold endpoint penalty in
//! place of a hard matching constraint.
//!
//! The path energy is
//!
//! ```text
//! E = ∫₀¹ ∫ ( a0|v|² + a1|D_s v|² + a2|D_s² v|² ) ds dθ-dual dt,
//! ```
//!
//! with v = ∂_t c the path velocity, D_s = |∂_θ c|⁻¹ ∂_θ the arc-length
//! derivative, and ds = |∂_θ c| dθ the arc-length element. Everything is
//! evaluated by Gauss–Legendre quadrature on the spline's knot grid; the
//! energy gradient with respect to the control points is exact for the
//! discrete (quadrature) energy.

use serde::{Deserialize, Serialize};

use crate::config::{EnergyRow, MatchConfig, MatchReport, Model};
use crate::error::{Error, Result};
use crate::linalg::LuFactor;
use crate::shapes::{cell_features, ShapeKind, SimplicialShape};
use crate::spline::BSplineBasis;

const TAU: f64 = std::f64::consts::TAU;

/// Coefficients of the constant-coefficient Sobolev metric
/// `∫ a0|h|² + a1|D_s h|² + a2|D_s² h|² ds` on curves, where `D_s`
/// is the arc-length derivative and `ds` the arc-length element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolevCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Default for SobolevCoeffs {
    /// First-order metric with both zeroth and first-order terms active.
    fn default() -> Self {
        SobolevCoeffs {
            a0: 1.0,
            a1: 1.0,
            a2: 0.0,
        }
    }
}

impl SobolevCoeffs {
    pub fn validate(&self) -> Result<()> {
        if !(self.a0 >= 0.0 && self.a1 >= 0.0 && self.a2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "sobolev coefficients must be nonnegative".into(),
            ));
        }
        if self.a0 + self.a1 + self.a2 <= 0.0 {
            return Err(Error::InvalidConfig(
                "at least one sobolev coefficient must be positive".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Gauss–Legendre quadrature
// ---------------------------------------------------------------------------

/// Gauss–Legendre nodes and weights on [-1, 1]; exact for polynomials of
/// degree ≤ 2n−1.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton iteration from the Chebyshev-based initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let mut p0 = 1.0f64;
                let mut p1 = 0.0f64;
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
                let dx = p0 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        QuadratureRule { nodes, weights }
    }

    /// Nodes and weights mapped to the interval [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, w * half))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Tensor-product spline paths
// ---------------------------------------------------------------------------

/// First and second parameter derivatives of a path point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathJet {
    pub c: [f64; 3],
    /// ∂_t c (the path velocity v)
    pub c_t: [f64; 3],
    /// ∂_θ c
    pub c_th: [f64; 3],
    /// ∂_θ ∂_t c
    pub c_t_th: [f64; 3],
    /// ∂_θ² c
    pub c_thth: [f64; 3],
    /// ∂_θ² ∂_t c
    pub c_t_thth: [f64; 3],
}

/// A path of curves c(t, θ) as a tensor-product B-spline: clamped in t on
/// [0, 1], periodic (closed curves) or clamped (open) in θ on [0, 2π].
/// Control coefficients are stored flat as `(row_t × ctrl_theta × dim)`.
#[derive(Debug, Clone)]
pub struct SplinePath {
    basis_t: BSplineBasis,
    basis_theta: BSplineBasis,
    dim: usize,
    coef: Vec<f64>,
}

impl SplinePath {
    pub fn new(
        basis_t: BSplineBasis,
        basis_theta: BSplineBasis,
        dim: usize,
        coef: Vec<f64>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidConfig(format!(
                "path dimension must be 2 or 3, got {dim}"
            )));
        }
        let expect = basis_t.num_ctrl() * basis_theta.num_ctrl() * dim;
        if coef.len() != expect {
            return Err(Error::DimensionMismatch(expect, coef.len()));
        }
        Ok(SplinePath {
            basis_t,
            basis_theta,
            dim,
            coef,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_t(&self) -> &BSplineBasis {
        &self.basis_t
    }

    pub fn basis_theta(&self) -> &BSplineBasis {
        &self.basis_theta
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn coef_mut(&mut self) -> &mut [f64] {
        &mut self.coef
    }

    fn coef_at(&self, row: usize, col: usize) -> &[f64] {
        let n_th = self.basis_theta.num_ctrl();
        let start = (row * n_th + col) * self.dim;
        &self.coef[start..start + self.dim]
    }

    /// Point and parameter derivatives at (t, θ).
    pub fn eval_jet(&self, t: f64, theta: f64) -> PathJet {
        let d = self.dim;
        let n_th = self.basis_theta.num_ctrl();
        let (ft, bt) = self.basis_t.eval(t, 1);
        let (fth, nth) = self.basis_theta.eval(theta, 2);
        let mut jet = PathJet::default();
        for (jt, _) in bt[0].iter().enumerate() {
            for (jth, _) in nth[0].iter().enumerate() {
                let col = if self.basis_theta.is_periodic() {
                    (fth + jth) % n_th
                } else {
                    fth + jth
                };
                let c = self.coef_at(ft + jt, col);
                let b0 = bt[0][jt];
                let b1 = bt[1][jt];
                let n0 = nth[0][jth];
                let n1 = nth[1][jth];
                let n2 = nth[2][jth];
                for k in 0..d {
                    jet.c[k] += c[k] * b0 * n0;
                    jet.c_t[k] += c[k] * b1 * n0;
                    jet.c_th[k] += c[k] * b0 * n1;
                    jet.c_t_th[k] += c[k] * b1 * n1;
                    jet.c_thth[k] += c[k] * b0 * n2;
                    jet.c_t_thth[k] += c[k] * b1 * n2;
                }
            }
        }
        jet
    }

    /// The θ parameters at which the time-slice curves are sampled.
    pub fn sample_params(&self, num_points: usize) -> Vec<f64> {
        let closed = self.basis_theta.is_periodic();
        (0..num_points)
            .map(|m| {
                if closed {
                    TAU * m as f64 / num_points as f64
                } else {
                    TAU * m as f64 / (num_points - 1) as f64
                }
            })
            .collect()
    }

    /// The curve at time `t`, sampled at `num_points` parameters.
    pub fn sample_curve(&self, t: f64, num_points: usize) -> Result<SimplicialShape> {
        let params = self.sample_params(num_points);
        let mut vertices = Vec::with_capacity(num_points * self.dim);
        for &theta in &params {
            let jet = self.eval_jet(t, theta);
            vertices.extend_from_slice(&jet.c[..self.dim]);
        }
        SimplicialShape::polyline(self.dim, vertices, self.basis_theta.is_periodic())
    }
}

// ---------------------------------------------------------------------------
// Path energy
// ---------------------------------------------------------------------------

/// Precomputed basis values at the tensor quadrature nodes.
struct NodeTable {
    /// (position, weight, first control index, values[deriv][j])
    t_nodes: Vec<(f64, f64, usize, Vec<Vec<f64>>)>,
    th_nodes: Vec<(f64, f64, usize, Vec<Vec<f64>>)>,
}

fn build_node_table(path: &SplinePath, quad_t: usize, quad_theta: usize) -> NodeTable {
    let rule_t = QuadratureRule::gauss_legendre(quad_t);
    let rule_th = QuadratureRule::gauss_legendre(quad_theta);
    let mut t_nodes = Vec::new();
    for s in 0..path.basis_t.num_spans() {
        let (a, b) = path.basis_t.span_bounds(s);
        for (t, w) in rule_t.mapped(a, b) {
            let (first, vals) = path.basis_t.eval(t, 1);
            t_nodes.push((t, w, first, vals));
        }
    }
    let mut th_nodes = Vec::new();
    for s in 0..path.basis_theta.num_spans() {
        let (a, b) = path.basis_theta.span_bounds(s);
        for (theta, w) in rule_th.mapped(a, b) {
            let (first, vals) = path.basis_theta.eval(theta, 2);
            th_nodes.push((theta, w, first, vals));
        }
    }
    NodeTable { t_nodes, th_nodes }
}

/// Shared energy/gradient kernel; `grad` (same layout as the coefficients)
/// receives the exact gradient of the quadrature energy when present.
fn energy_impl(
    path: &SplinePath,
    coeffs: &SobolevCoeffs,
    table: &NodeTable,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let d = path.dim;
    let n_th = path.basis_theta.num_ctrl();
    let periodic = path.basis_theta.is_periodic();
    let (a0, a1, a2) = (coeffs.a0, coeffs.a1, coeffs.a2);
    let mut total = 0.0;
    for (t, wt, ft, bt) in &table.t_nodes {
        for (theta, wth, fth, nth) in &table.th_nodes {
            let w = wt * wth;
            // assemble the jet at this node
            let mut c_th = [0.0; 3];
            let mut c_thth = [0.0; 3];
            let mut v = [0.0; 3];
            let mut v_th = [0.0; 3];
            let mut v_thth = [0.0; 3];
            for jt in 0..bt[0].len() {
                for jth in 0..nth[0].len() {
                    let col = if periodic { (fth + jth) % n_th } else { fth + jth };
                    let c = path.coef_at(ft + jt, col);
                    let b0 = bt[0][jt];
                    let b1 = bt[1][jt];
                    let n0 = nth[0][jth];
                    let n1 = nth[1][jth];
                    let n2 = nth[2][jth];
                    for k in 0..d {
                        c_th[k] += c[k] * b0 * n1;
                        c_thth[k] += c[k] * b0 * n2;
                        v[k] += c[k] * b1 * n0;
                        v_th[k] += c[k] * b1 * n1;
                        v_thth[k] += c[k] * b1 * n2;
                    }
                }
            }
            let len2: f64 = c_th.iter().map(|x| x * x).sum();
            let len = len2.sqrt();
            if len < 1e-12 {
                return Err(Error::NotImmersed {
                    t: *t,
                    theta: *theta,
                    speed: len,
                });
            }
            let beta: f64 = (0..d).map(|k| c_th[k] * c_thth[k]).sum();
            // second arc-length derivative of the velocity
            let mut ws = [0.0; 3];
            for k in 0..d {
                ws[k] = v_thth[k] / len2 - v_th[k] * beta / (len2 * len2);
            }
            let v2: f64 = v.iter().map(|x| x * x).sum();
            let vth2: f64 = v_th.iter().map(|x| x * x).sum();
            let ws2: f64 = ws.iter().map(|x| x * x).sum();
            let integrand = (a0 * v2 + a1 * vth2 / len2 + a2 * ws2) * len;
            total += w * integrand;

            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            // partials of the integrand with respect to the jet pieces
            let wv: f64 = (0..d).map(|k| ws[k] * v_th[k]).sum();
            let wvtt: f64 = (0..d).map(|k| ws[k] * v_thth[k]).sum();
            let l3 = len2 * len;
            let l5 = l3 * len2;
            let mut gv = [0.0; 3];
            let mut gvth = [0.0; 3];
            let mut gvthth = [0.0; 3];
            let mut gcth = [0.0; 3];
            let mut gcthth = [0.0; 3];
            let cth_fac = (a0 * v2 - a1 * vth2 / len2 + a2 * ws2) / len
                + a2 * (-4.0 * wvtt / l3 + 8.0 * beta * wv / l5);
            for k in 0..d {
                gv[k] = 2.0 * a0 * len * v[k];
                gvth[k] = 2.0 * a1 * v_th[k] / len - 2.0 * a2 * beta * ws[k] / l3;
                gvthth[k] = 2.0 * a2 * ws[k] / len;
                gcth[k] = cth_fac * c_th[k] - 2.0 * a2 * wv * c_thth[k] / l3;
                gcthth[k] = -2.0 * a2 * wv * c_th[k] / l3;
            }
            // scatter through the basis products
            for jt in 0..bt[0].len() {
                for jth in 0..nth[0].len() {
                    let col = if periodic { (fth + jth) % n_th } else { fth + jth };
                    let idx = ((ft + jt) * n_th + col) * d;
                    let b0 = bt[0][jt];
                    let b1 = bt[1][jt];
                    let n0 = nth[0][jth];
                    let n1 = nth[1][jth];
                    let n2 = nth[2][jth];
                    for k in 0..d {
                        g[idx + k] += w
                            * (gcth[k] * b0 * n1
                                + gcthth[k] * b0 * n2
                                + gv[k] * b1 * n0
                                + gvth[k] * b1 * n1
                                + gvthth[k] * b1 * n2);
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Sobolev path energy of a spline path under `quad_t × quad_theta`
/// Gauss–Legendre quadrature per knot cell.
pub fn path_energy(
    path: &SplinePath,
    coeffs: &SobolevCoeffs,
    quad_t: usize,
    quad_theta: usize,
) -> Result<f64> {
    coeffs.validate()?;
    let table = build_node_table(path, quad_t, quad_theta);
    energy_impl(path, coeffs, &table, None)
}

/// Path energy together with its exact gradient with respect to all control
/// coefficients (same flat layout as [`SplinePath::coef`]).
pub fn path_energy_grad(
    path: &SplinePath,
    coeffs: &SobolevCoeffs,
    quad_t: usize,
    quad_theta: usize,
) -> Result<(f64, Vec<f64>)> {
    coeffs.validate()?;
    let table = build_node_table(path, quad_t, quad_theta);
    let mut grad = vec![0.0; path.coef.len()];
    let e = energy_impl(path, coeffs, &table, Some(&mut grad))?;
    Ok((e, grad))
}

// ---------------------------------------------------------------------------
// Curve fitting
// ---------------------------------------------------------------------------

/// Least-squares fit of a polygon's vertices by a θ-spline, with a small
/// second-difference Tikhonov term to keep the system well-posed when the
/// basis outnumbers the vertices. Returns the flat `(ctrl_theta × dim)`
/// coefficients and the RMS vertex residual. Fails with `FitError` when the
/// residual exceeds `tol`.
pub fn fit_curve_spline(
    basis: &BSplineBasis,
    shape: &SimplicialShape,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    if shape.kind() != ShapeKind::Curve {
        return Err(Error::InvalidConfig(
            "spline fitting expects a curve".into(),
        ));
    }
    let d = shape.dim();
    let n = basis.num_ctrl();
    let nv = shape.num_vertices();
    let verts = shape.vertices();
    let closed = basis.is_periodic();
    let params: Vec<f64> = (0..nv)
        .map(|m| {
            if closed {
                TAU * m as f64 / nv as f64
            } else {
                TAU * m as f64 / (nv - 1) as f64
            }
        })
        .collect();
    // normal equations AᵀA + τ DᵀD with D the (cyclic) second-difference map
    let mut ata = vec![0.0; n * n];
    let mut atx = vec![0.0; n * d];
    let mut rows = Vec::with_capacity(nv);
    for (m, &theta) in params.iter().enumerate() {
        let (first, vals) = basis.eval(theta, 0);
        let k = basis.order();
        let cols: Vec<usize> = (0..k)
            .map(|j| if closed { (first + j) % n } else { first + j })
            .collect();
        for a in 0..k {
            for b in 0..k {
                ata[cols[a] * n + cols[b]] += vals[0][a] * vals[0][b];
            }
            for kdim in 0..d {
                atx[cols[a] * d + kdim] += vals[0][a] * verts[m * d + kdim];
            }
        }
        rows.push((cols, vals[0].clone()));
    }
    let mean_diag = (0..n).map(|i| ata[i * n + i]).sum::<f64>() / n as f64;
    let tau = 1e-8 * mean_diag.max(1e-30);
    // accumulate τ·DᵀD
    let add_diff_row = |ata: &mut [f64], idx: [usize; 3]| {
        let c = [1.0, -2.0, 1.0];
        for a in 0..3 {
            for b in 0..3 {
                ata[idx[a] * n + idx[b]] += tau * c[a] * c[b];
            }
        }
    };
    if closed {
        for l in 0..n {
            add_diff_row(&mut ata, [(l + n - 1) % n, l, (l + 1) % n]);
        }
    } else {
        for l in 1..n - 1 {
            add_diff_row(&mut ata, [l - 1, l, l + 1]);
        }
    }
    let factor = LuFactor::new(ata, n).ok_or_else(|| {
        Error::InvalidConfig("singular spline fitting system".into())
    })?;
    let mut coef = vec![0.0; n * d];
    let mut rhs = vec![0.0; n];
    for kdim in 0..d {
        for l in 0..n {
            rhs[l] = atx[l * d + kdim];
        }
        let sol = factor.solve(&rhs);
        for l in 0..n {
            coef[l * d + kdim] = sol[l];
        }
    }
    // RMS vertex residual
    let mut ss = 0.0;
    for (m, (cols, vals)) in rows.iter().enumerate() {
        for kdim in 0..d {
            let fit: f64 = cols
                .iter()
                .zip(vals)
                .map(|(&c, &v)| coef[c * d + kdim] * v)
                .sum();
            let r = fit - verts[m * d + kdim];
            ss += r * r;
        }
    }
    let residual = (ss / nv as f64).sqrt();
    if residual > tol {
        return Err(Error::FitError { residual, tol });
    }
    Ok((coef, residual))
}

// ---------------------------------------------------------------------------
// Matching driver
// ---------------------------------------------------------------------------

/// Result of an intrinsic-metric matching run.
#[derive(Debug, Clone)]
pub struct IntrinsicMatchResult {
    pub path: SplinePath,
    pub frames: Vec<(f64, SimplicialShape)>,
    pub energy_log: Vec<EnergyRow>,
    pub report: MatchReport,
}

/// Geodesic matching in the intrinsic Sobolev metric: fit the source curve
/// as the fixed t=0 row of a spline path, then minimize path energy plus a
/// varifold endpoint penalty over the remaining control rows. The target
/// enters through the same fit-and-sample pipeline as the evolving curve,
/// so the fidelity compares like against like.
pub fn match_intrinsic(
    q0: &SimplicialShape,
    q1: &SimplicialShape,
    cfg: &MatchConfig,
) -> Result<IntrinsicMatchResult> {
    cfg.validate()?;
    if cfg.model != Model::Intrinsic {
        return Err(Error::InvalidConfig(
            "match_intrinsic requires model = intrinsic".into(),
        ));
    }
    if q0.kind() != ShapeKind::Curve || q1.kind() != ShapeKind::Curve {
        return Err(Error::InvalidConfig(
            "the intrinsic model is defined for curves only".into(),
        ));
    }
    if q0.dim() != q1.dim() {
        return Err(Error::DimensionMismatch(q0.dim(), q1.dim()));
    }
    if q0.is_closed() != q1.is_closed() {
        return Err(Error::InvalidConfig(
            "cannot match an open curve against a closed one".into(),
        ));
    }
    let started = std::time::Instant::now();
    let disc = &cfg.discretization;
    if disc.ctrl_t < 2 {
        return Err(Error::InvalidConfig("ctrl_t must be at least 2".into()));
    }
    let coeffs = cfg.sobolev;
    coeffs.validate()?;
    if coeffs.a2 > 0.0 && disc.order_theta < 3 {
        return Err(Error::OrderTooHigh(
            "the a2 term needs a θ-basis of order >= 3".into(),
        ));
    }
    if coeffs.a1 > 0.0 && disc.order_theta < 2 {
        return Err(Error::OrderTooHigh(
            "the a1 term needs a θ-basis of order >= 2".into(),
        ));
    }
    let d = q0.dim();
    let basis_t = BSplineBasis::clamped(disc.ctrl_t, disc.order_t, 0.0, 1.0)?;
    let basis_theta = if q0.is_closed() {
        BSplineBasis::periodic(disc.ctrl_theta, disc.order_theta, TAU)?
    } else {
        BSplineBasis::clamped(disc.ctrl_theta, disc.order_theta, 0.0, TAU)?
    };
    let n_th = basis_theta.num_ctrl();
    let rows_t = basis_t.num_ctrl();

    // both endpoint curves go through the same fit pipeline
    let (row0, res0) = fit_curve_spline(&basis_theta, q0, disc.fit_tol)?;
    let (target_coef, res1) = fit_curve_spline(&basis_theta, q1, disc.fit_tol)?;
    let fit_residual = res0.max(res1);

    let eval_points = disc.resolved_eval_points();
    // sample table for the endpoint curve (t = 1 ⇒ only the last control row)
    let mut start_coef = Vec::with_capacity(rows_t * n_th * d);
    for _ in 0..rows_t {
        start_coef.extend_from_slice(&row0);
    }
    let path0 = SplinePath::new(basis_t.clone(), basis_theta.clone(), d, start_coef)?;
    let params = path0.sample_params(eval_points);
    let sample_rows: Vec<(Vec<usize>, Vec<f64>)> = params
        .iter()
        .map(|&theta| {
            let (first, vals) = basis_theta.eval(theta, 0);
            let cols = (0..basis_theta.order())
                .map(|j| {
                    if basis_theta.is_periodic() {
                        (first + j) % n_th
                    } else {
                        first + j
                    }
                })
                .collect();
            (cols, vals[0].clone())
        })
        .collect();
    let sample_row_coef = |row: &[f64]| -> Vec<f64> {
        let mut verts = vec![0.0; eval_points * d];
        for (m, (cols, vals)) in sample_rows.iter().enumerate() {
            for (c, v) in cols.iter().zip(vals) {
                for k in 0..d {
                    verts[m * d + k] += row[c * d + k] * v;
                }
            }
        }
        verts
    };
    let prototype = SimplicialShape::polyline(d, sample_row_coef(&row0), q0.is_closed())?;
    let target_shape = prototype.with_vertices(sample_row_coef(&target_coef))?;
    let target_features = cell_features(&target_shape)?;
    let vkernel = cfg.varifold.kernel();
    let lambda = cfg.lambda;
    let fidelity_of = |end_verts: Vec<f64>| -> f64 {
        match prototype
            .with_vertices(end_verts)
            .and_then(|s| cell_features(&s))
        {
            Ok(f) => crate::varifold::dist_sq_features(&f, &target_features, &vkernel),
            Err(_) => f64::INFINITY,
        }
    };

    let table = build_node_table(&path0, disc.quad_t, disc.quad_theta);
    let free_len = (rows_t - 1) * n_th * d;
    let row_len = n_th * d;
    let mut path = path0.clone();
    let x0 = path0.coef()[row_len..].to_vec();
    let initial_fidelity = fidelity_of(sample_row_coef(&row0));

    let mut log: Vec<EnergyRow> = Vec::new();
    let opts = cfg.optim.to_options();
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let mut p = path0.clone();
        p.coef_mut()[row_len..].copy_from_slice(x);
        let mut grad = vec![0.0; p.coef().len()];
        let energy = match energy_impl(&p, &coeffs, &table, Some(&mut grad)) {
            Ok(e) => e,
            Err(_) => return (f64::INFINITY, vec![0.0; x.len()]),
        };
        let last_row = &p.coef()[(rows_t - 1) * row_len..];
        let end_verts = sample_row_coef(last_row);
        let end_shape = match prototype.with_vertices(end_verts) {
            Ok(s) => s,
            Err(_) => return (f64::INFINITY, vec![0.0; x.len()]),
        };
        let end_features = match cell_features(&end_shape) {
            Ok(f) => f,
            Err(_) => return (f64::INFINITY, vec![0.0; x.len()]),
        };
        let fid =
            crate::varifold::dist_sq_features(&end_features, &target_features, &vkernel);
        let gfid =
            crate::varifold::grad_features(&end_shape, &end_features, &target_features, &vkernel);
        // chain the vertex gradient into the last control row
        let last_start = (rows_t - 1) * row_len;
        for (m, (cols, vals)) in sample_rows.iter().enumerate() {
            for (c, v) in cols.iter().zip(vals) {
                for k in 0..d {
                    grad[last_start + c * d + k] += lambda * v * gfid[m * d + k];
                }
            }
        }
        (energy + lambda * fid, grad[row_len..].to_vec())
    };
    let on_iterate = |iter: usize, x: &[f64], f: f64, _g: f64| {
        let mut p = path0.clone();
        p.coef_mut()[row_len..].copy_from_slice(x);
        let energy = energy_impl(&p, &coeffs, &table, None).unwrap_or(f64::INFINITY);
        let last_row = &p.coef()[(rows_t - 1) * row_len..];
        let fid = fidelity_of(sample_row_coef(last_row));
        log.push(EnergyRow {
            iter,
            energy,
            fidelity: fid,
            total: f,
            outer_energy: None,
            intrinsic_energy: None,
        });
    };
    let result = crate::optim::minimize_with_callback(objective, &x0, &opts, on_iterate)?;
    assert_eq!(result.x.len(), free_len);
    path.coef_mut()[row_len..].copy_from_slice(&result.x);

    let mut warnings: Vec<String> = Vec::new();
    let mut frames = Vec::new();
    for &t in &cfg.output.frame_times {
        match path.sample_curve(t, eval_points) {
            Ok(s) => frames.push((t, s)),
            Err(e) => warnings.push(format!("frame at t={t} is degenerate: {e}")),
        }
    }
    let final_energy = energy_impl(&path, &coeffs, &table, None)?;
    let last_row = &path.coef()[(rows_t - 1) * row_len..];
    let final_fidelity = fidelity_of(sample_row_coef(last_row));
    let report = MatchReport {
        model: cfg.model.name().into(),
        solver: cfg.solver.name().into(),
        energy: final_energy,
        fidelity: final_fidelity,
        total: result.f,
        initial_fidelity,
        outer_energy: None,
        intrinsic_energy: None,
        fit_residual: Some(fit_residual),
        resolved_sigma: None,
        iterations: result.iterations,
        status: result.status.name().into(),
        warnings: warnings.clone(),
        timing_seconds: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok(IntrinsicMatchResult {
        path,
        frames,
        energy_log: log,
        report,
    })
}
