//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Deterministic: no randomization anywhere, so two runs from the same
//! starting point produce identical iterates. The solvers in this crate all
//! provide exact gradients of their discretized objectives, which is what
//! makes the curvature condition reliable.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_inf};

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Number of curvature pairs kept by the two-loop recursion.
    pub memory: usize,
    pub max_iters: usize,
    /// Relative gradient tolerance: stop when ‖g‖∞ ≤ grad_tol · (1 + |f|).
    pub grad_tol: f64,
    /// Sufficient-decrease constant (Armijo).
    pub wolfe_c1: f64,
    /// Curvature constant.
    pub wolfe_c2: f64,
    /// Maximum objective evaluations per line search.
    pub max_line_search: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            memory: 10,
            max_iters: 500,
            grad_tol: 1e-6,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimStatus {
    Converged,
    MaxIters,
    LineSearchFailed,
}

impl OptimStatus {
    pub fn name(self) -> &'static str {
        match self {
            OptimStatus::Converged => "converged",
            OptimStatus::MaxIters => "max_iters",
            OptimStatus::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HistoryEntry {
    pub iter: usize,
    pub f: f64,
    pub grad_inf: f64,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub status: OptimStatus,
    /// Number of accepted steps.
    pub iterations: usize,
    /// (iteration, objective, ‖g‖∞) at the initial point and after every
    /// accepted step; the objective values are non-increasing.
    pub history: Vec<HistoryEntry>,
}

/// Minimize `objective` starting from `x0`.
///
/// The objective returns the value and the gradient. A non-finite value at
/// `x0` is an error; non-finite values at trial points during the line
/// search are treated as "step too long" and the step shrinks.
pub fn minimize<F>(objective: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    minimize_with_callback(objective, x0, opts, |_, _, _, _| {})
}

/// [`minimize`] with a per-iterate callback `(iter, x, f, ‖g‖∞)`, invoked at
/// the initial point and after each accepted step.
pub fn minimize_with_callback<F, C>(
    mut objective: F,
    x0: &[f64],
    opts: &OptimOptions,
    mut on_iterate: C,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    C: FnMut(usize, &[f64], f64, f64),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    let mut history = vec![HistoryEntry {
        iter: 0,
        f,
        grad_inf: norm_inf(&g),
    }];
    on_iterate(0, &x, f, norm_inf(&g));

    // curvature pairs, newest last
    let mut s_mem: Vec<Vec<f64>> = Vec::new();
    let mut y_mem: Vec<Vec<f64>> = Vec::new();

    let mut status = OptimStatus::MaxIters;
    let mut iterations = 0;

    for iter in 1..=opts.max_iters {
        if norm_inf(&g) <= opts.grad_tol * (1.0 + f.abs()) {
            status = OptimStatus::Converged;
            break;
        }

        let mut d = two_loop_direction(&g, &s_mem, &y_mem);
        let mut dg = dot(&d, &g);
        if dg >= 0.0 {
            // curvature memory became unusable; restart from steepest descent
            s_mem.clear();
            y_mem.clear();
            d = g.iter().map(|v| -v).collect();
            dg = dot(&d, &g);
        }

        match line_search(&mut objective, &x, f, &g, &d, dg, opts) {
            Some(ls) => {
                let mut s = vec![0.0; n];
                for i in 0..n {
                    s[i] = ls.alpha * d[i];
                }
                let y: Vec<f64> = ls.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm(&s) * norm(&y) {
                    if s_mem.len() == opts.memory {
                        s_mem.remove(0);
                        y_mem.remove(0);
                    }
                    s_mem.push(s.clone());
                    y_mem.push(y);
                }
                axpy(1.0, &s, &mut x);
                f = ls.f;
                g = ls.g;
                iterations = iter;
                history.push(HistoryEntry {
                    iter,
                    f,
                    grad_inf: norm_inf(&g),
                });
                on_iterate(iter, &x, f, norm_inf(&g));
                if iter == opts.max_iters {
                    status = OptimStatus::MaxIters;
                }
            }
            None => {
                status = OptimStatus::LineSearchFailed;
                break;
            }
        }
    }
    if status == OptimStatus::MaxIters && norm_inf(&g) <= opts.grad_tol * (1.0 + f.abs()) {
        status = OptimStatus::Converged;
    }
    Ok(OptimResult {
        x,
        f,
        grad: g,
        status,
        iterations,
        history,
    })
}

/// Two-loop recursion with the standard γ = sᵀy/yᵀy initial scaling.
fn two_loop_direction(g: &[f64], s_mem: &[Vec<f64>], y_mem: &[Vec<f64>]) -> Vec<f64> {
    let m = s_mem.len();
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; m];
    let mut rho = vec![0.0; m];
    for i in (0..m).rev() {
        rho[i] = 1.0 / dot(&y_mem[i], &s_mem[i]);
        alpha[i] = rho[i] * dot(&s_mem[i], &q);
        axpy(-alpha[i], &y_mem[i], &mut q);
    }
    if m > 0 {
        let last = m - 1;
        let gamma = dot(&s_mem[last], &y_mem[last]) / dot(&y_mem[last], &y_mem[last]);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for i in 0..m {
        let beta = rho[i] * dot(&y_mem[i], &q);
        axpy(alpha[i] - beta, &s_mem[i], &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct LineSearchResult {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

/// Strong Wolfe line search: bracketing plus bisection zoom. Returns `None`
/// when the evaluation budget runs out without an acceptable step.
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    _g0: &[f64],
    d: &[f64],
    dphi0: f64,
    opts: &OptimOptions,
) -> Option<LineSearchResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if dphi0 >= 0.0 {
        return None;
    }
    let c1 = opts.wolfe_c1;
    let c2 = opts.wolfe_c2;
    let mut evals = 0usize;
    let mut eval = |alpha: f64, evals: &mut usize| -> (f64, Vec<f64>, f64) {
        let mut xt = x.to_vec();
        axpy(alpha, d, &mut xt);
        let (ft, gt) = objective(&xt);
        *evals += 1;
        let dphi = dot(&gt, d);
        (ft, gt, dphi)
    };
    let accept = |alpha: f64, ft: f64, dphi: f64| -> bool {
        let armijo = ft <= f0 + c1 * alpha * dphi0;
        let curvature = dphi.abs() <= -c2 * dphi0;
        armijo && curvature
    };

    let mut alpha_prev = 0.0;
    let mut phi_prev = f0;
    let mut alpha = 1.0;
    let alpha_max = 1e10;

    // Bracketing phase: grow the step until the minimum is bracketed.
    let (mut lo, mut hi, mut phi_lo) = loop {
        if evals >= opts.max_line_search {
            return None;
        }
        let (ft, gt, dphi) = eval(alpha, &mut evals);
        let ft_cmp = if ft.is_finite() { ft } else { f64::INFINITY };
        if ft_cmp > f0 + c1 * alpha * dphi0 || (evals > 1 && ft_cmp >= phi_prev) {
            break (alpha_prev, alpha, phi_prev);
        }
        if accept(alpha, ft, dphi) {
            debug_assert!(ft <= f0 + c1 * alpha * dphi0);
            debug_assert!(dphi.abs() <= -c2 * dphi0);
            return Some(LineSearchResult { alpha, f: ft, g: gt });
        }
        if dphi >= 0.0 {
            break (alpha, alpha_prev, ft);
        }
        alpha_prev = alpha;
        phi_prev = ft;
        alpha = (2.0 * alpha).min(alpha_max);
        if alpha_prev >= alpha_max {
            return None;
        }
    };

    // Zoom phase: bisect the bracket [lo, hi] (lo has the lower value seen).
    while evals < opts.max_line_search {
        let alpha = 0.5 * (lo + hi);
        let (ft, gt, dphi) = eval(alpha, &mut evals);
        let ft_cmp = if ft.is_finite() { ft } else { f64::INFINITY };
        if ft_cmp > f0 + c1 * alpha * dphi0 || ft_cmp >= phi_lo {
            hi = alpha;
        } else {
            if accept(alpha, ft, dphi) {
                debug_assert!(ft <= f0 + c1 * alpha * dphi0);
                debug_assert!(dphi.abs() <= -c2 * dphi0);
                return Some(LineSearchResult { alpha, f: ft, g: gt });
            }
            if dphi * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = alpha;
            phi_lo = ft;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_in_a_few_iterations() {
        let c = [1.0, -2.0, 3.0];
        let res = minimize(
            |x: &[f64]| {
                let f = 0.5 * x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let g = x.iter().zip(&c).map(|(a, b)| a - b).collect();
                (f, g)
            },
            &[0.0, 0.0, 0.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        assert!(res.iterations <= 3, "took {} iterations", res.iterations);
        for i in 0..3 {
            assert!((res.x[i] - c[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rosenbrock_converges_within_200_iterations() {
        let res = minimize(
            |x: &[f64]| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ];
                (f, g)
            },
            &[-1.2, 1.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        assert!(res.iterations <= 200, "took {} iterations", res.iterations);
        assert!((res.x[0] - 1.0).abs() < 1e-5);
        assert!((res.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn history_is_monotone_nonincreasing() {
        let res = minimize(
            |x: &[f64]| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ];
                (f, g)
            },
            &[-1.2, 1.0],
            &OptimOptions::default(),
        )
        .unwrap();
        for w in res.history.windows(2) {
            assert!(w[1].f <= w[0].f, "history increased: {} -> {}", w[0].f, w[1].f);
        }
    }

    #[test]
    fn constant_objective_converges_immediately() {
        let res = minimize(
            |x: &[f64]| (7.5, vec![0.0; x.len()]),
            &[1.0, 2.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.history.len(), 1);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let res = minimize(
            |_: &[f64]| (f64::NAN, vec![0.0]),
            &[1.0],
            &OptimOptions::default(),
        );
        assert!(matches!(res, Err(Error::NonFiniteObjective)));
    }

    #[test]
    fn unbounded_linear_objective_fails_the_line_search() {
        // f(x) = -x never satisfies the curvature condition
        let res = minimize(
            |x: &[f64]| (-x[0], vec![-1.0]),
            &[0.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert_eq!(res.status, OptimStatus::LineSearchFailed);
    }

    #[test]
    fn runs_are_deterministic() {
        let run = || {
            minimize(
                |x: &[f64]| {
                    let (a, b) = (x[0], x[1]);
                    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                    let g = vec![
                        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                        200.0 * (b - a * a),
                    ];
                    (f, g)
                },
                &[0.3, -0.7],
                &OptimOptions::default(),
            )
            .unwrap()
        };
        let r1 = run();
        let r2 = run();
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.iterations, r2.iterations);
        let h1: Vec<f64> = r1.history.iter().map(|h| h.f).collect();
        let h2: Vec<f64> = r2.history.iter().map(|h| h.f).collect();
        assert_eq!(h1, h2);
    }

    #[test]
    fn deep_valley_requires_and_uses_zoom() {
        // scaled quadratic with strong anisotropy exercises the zoom phase
        let res = minimize(
            |x: &[f64]| {
                let f = 0.5 * (1000.0 * x[0] * x[0] + x[1] * x[1]);
                (f, vec![1000.0 * x[0], x[1]])
            },
            &[1.0, 1.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        assert!(res.f < 1e-10);
    }
}
