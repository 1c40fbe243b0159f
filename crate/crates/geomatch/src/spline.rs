//! Univariate B-spline bases, clamped and periodic.
//!
//! The intrinsic matching model represents a path of curves as a
//! tensor-product spline: clamped in the time direction on [0, 1], periodic
//! in the curve parameter for closed curves. This module provides the 1-D
//! bases, evaluated with derivatives by the standard knot-differencing
//! recurrence; only the `order` locally supported functions are returned
//! per evaluation point.
//!
//! Throughout, `order` = polynomial degree + 1 (an order-4 basis is cubic).

use crate::error::{Error, Result};

/// A univariate B-spline basis with uniform interior knots.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    order: usize,
    num_ctrl: usize,
    /// Full knot vector for the clamped case; empty when periodic.
    knots: Vec<f64>,
    periodic: bool,
    /// Domain start / end; for periodic bases the domain is [0, period).
    t0: f64,
    t1: f64,
}

impl BSplineBasis {
    /// Clamped (open-uniform) basis of `num_ctrl` functions on `[a, b]`:
    /// full multiplicity at both ends, uniform interior knots.
    pub fn clamped(num_ctrl: usize, order: usize, a: f64, b: f64) -> Result<Self> {
        Self::check_sizes(num_ctrl, order)?;
        if !(b > a) {
            return Err(Error::InvalidConfig(format!(
                "empty spline domain [{a}, {b}]"
            )));
        }
        let spans = num_ctrl - order + 1;
        let mut knots = Vec::with_capacity(num_ctrl + order);
        for _ in 0..order {
            knots.push(a);
        }
        for i in 1..spans {
            knots.push(a + (b - a) * i as f64 / spans as f64);
        }
        for _ in 0..order {
            knots.push(b);
        }
        Ok(BSplineBasis {
            order,
            num_ctrl,
            knots,
            periodic: false,
            t0: a,
            t1: b,
        })
    }

    /// Periodic basis of `num_ctrl` functions on `[0, period)` with uniform
    /// knot spacing `period / num_ctrl`. Control indices returned by
    /// [`BSplineBasis::eval`] must be wrapped modulo `num_ctrl`.
    pub fn periodic(num_ctrl: usize, order: usize, period: f64) -> Result<Self> {
        Self::check_sizes(num_ctrl, order)?;
        if !(period > 0.0) {
            return Err(Error::InvalidConfig("spline period must be positive".into()));
        }
        Ok(BSplineBasis {
            order,
            num_ctrl,
            knots: Vec::new(),
            periodic: true,
            t0: 0.0,
            t1: period,
        })
    }

    fn check_sizes(num_ctrl: usize, order: usize) -> Result<()> {
        if order < 1 {
            return Err(Error::InvalidConfig("spline order must be >= 1".into()));
        }
        if num_ctrl < order {
            return Err(Error::OrderTooHigh(format!(
                "order {order} needs at least {order} control points, got {num_ctrl}"
            )));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_ctrl(&self) -> usize {
        self.num_ctrl
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    /// Number of (nonempty) knot spans in the domain.
    pub fn num_spans(&self) -> usize {
        if self.periodic {
            self.num_ctrl
        } else {
            self.num_ctrl - self.order + 1
        }
    }

    /// Bounds of span `s`; spans tile the domain without gaps.
    pub fn span_bounds(&self, s: usize) -> (f64, f64) {
        let n = self.num_spans();
        assert!(s < n);
        let w = (self.t1 - self.t0) / n as f64;
        (self.t0 + w * s as f64, self.t0 + w * (s + 1) as f64)
    }

    /// Greville abscissae (knot averages); natural collocation sites, one
    /// per control point. Clamped: increasing from `a` to `b`. Periodic:
    /// unwrapped values `(l - (order-2)/2)·h`, not reduced mod the period.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.order - 1;
        if self.periodic {
            let h = (self.t1 - self.t0) / self.num_ctrl as f64;
            return (0..self.num_ctrl)
                .map(|l| {
                    if p == 0 {
                        (l as f64 + 0.5) * h
                    } else {
                        // mean of knots (l+1-p)h .. l·h
                        (l as f64 - (p as f64 - 1.0) / 2.0) * h
                    }
                })
                .collect();
        }
        (0..self.num_ctrl)
            .map(|l| {
                if p == 0 {
                    0.5 * (self.knots[l] + self.knots[l + 1])
                } else {
                    self.knots[l + 1..l + 1 + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Evaluate the `order` nonzero basis functions and their derivatives
    /// up to order `nders` at `t`. Returns `(first, values)` where
    /// `values[d][j]` is the d-th derivative of the function attached to
    /// control point `first + j` (reduce modulo `num_ctrl` when periodic).
    ///
    /// Clamped bases clamp `t` into the domain (so `t = b` is valid and
    /// returns the boundary values); periodic bases wrap it.
    pub fn eval(&self, t: f64, nders: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.order - 1;
        if self.periodic {
            let period = self.t1 - self.t0;
            let h = period / self.num_ctrl as f64;
            let tw = (t - self.t0).rem_euclid(period);
            let mu = ((tw / h).floor() as usize).min(self.num_ctrl - 1);
            // virtual uniform knots U_j = (j - p)·h; span index i = mu + p
            let i = mu + p;
            let knot = |j: isize| (j as f64 - p as f64) * h;
            let values = ders_basis_funs(i, tw, p, nders, &|j| knot(j as isize));
            (mu, values)
        } else {
            let tc = t.clamp(self.t0, self.t1);
            let i = self.find_span(tc);
            let values = ders_basis_funs(i, tc, p, nders, &|j| self.knots[j]);
            (i - p, values)
        }
    }

    /// Largest i with knots[i] <= t < knots[i+1] (last nonempty span at b).
    fn find_span(&self, t: f64) -> usize {
        let n = self.num_ctrl;
        let p = self.order - 1;
        if t >= self.knots[n] {
            return n - 1;
        }
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

/// Nonzero basis functions and derivatives at `t` on span `i` of a degree-p
/// basis with knot accessor `knot` (the knot-differencing recurrence).
/// Returns `values[d][j]`, d in 0..=nders, j in 0..=p.
fn ders_basis_funs(
    i: usize,
    t: f64,
    p: usize,
    nders: usize,
    knot: &dyn Fn(usize) -> f64,
) -> Vec<Vec<f64>> {
    let k = p + 1;
    // triangular table of basis values and knot differences
    let mut ndu = vec![vec![0.0; k]; k];
    let mut left = vec![0.0; k];
    let mut right = vec![0.0; k];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knot(i + 1 - j);
        right[j] = knot(i + j) - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let nd = nders.min(p);
    let mut ders = vec![vec![0.0; k]; nders + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = [vec![0.0; k], vec![0.0; k]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0].iter_mut().for_each(|v| *v = 0.0);
        a[1].iter_mut().for_each(|v| *v = 0.0);
        a[0][0] = 1.0;
        for kk in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - kk as isize;
            let pk = p - kk;
            if r >= kk {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize {
                kk - 1
            } else {
                p - r
            };
            for j in j1..=j2 {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
            }
            if r <= pk {
                a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                d += a[s2][kk] * ndu[r][pk];
            }
            ders[kk][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    // scale row k by p·(p−1)···(p−k+1)
    let mut factor = p as f64;
    for kk in 1..=nd {
        for v in ders[kk].iter_mut() {
            *v *= factor;
        }
        factor *= (p - kk) as f64;
    }
    ders
}
