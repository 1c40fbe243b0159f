//! Finite-dimensional optimal control on a fixed time grid.
//!
//! Both matching solvers in this crate reduce to the same template: minimize
//! a running cost plus an endpoint cost over controlled dynamics on [0, 1],
//!
//! ```text
//! J = ∫ L dt + U(x(1)),
//! ```
//!
//! discretized with classical RK4 on a uniform grid. Two parameterizations
//! are supported:
//!
//! * **trajectory mode** ([`trajectory_objective`]): the controls at the
//!   left endpoints of the `N` subintervals are the unknowns, the running
//!   cost uses the left-rectangle rule;
//! * **shooting mode** ([`shoot_objective`]): the initial costate of the
//!   reduced Hamiltonian system is the unknown, the running cost is
//!   accumulated along the flow with the trapezoid rule.
//!
//! Gradients are discrete adjoints: the RK4 recursion itself is
//! differentiated, stage by stage, so the gradient is exact for the
//! discretized objective (it matches central finite differences to
//! round-off, not just to O(h²) of some continuous adjoint).

use crate::error::{Error, Result};
use crate::linalg::axpy;

/// Controlled dynamics `ẋ = f(x, u)` with running cost `L(x, u)`.
///
/// Implementations provide vector-Jacobian products (pullbacks) rather than
/// full Jacobians; that is all the adjoint recursion needs.
pub trait ControlDynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// `out = f(x, u)`.
    fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    /// `L(x, u)`.
    fn lagrangian(&self, x: &[f64], u: &[f64]) -> f64;
    /// Accumulate `(∂f/∂x)ᵀ w` into `out_x` and `(∂f/∂u)ᵀ w` into `out_u`.
    fn dynamics_pullback(&self, x: &[f64], u: &[f64], w: &[f64], out_x: &mut [f64], out_u: &mut [f64]);
    /// Accumulate `∂L/∂x` into `out_x` and `∂L/∂u` into `out_u`, both scaled
    /// by `scale`.
    fn lagrangian_grad(&self, x: &[f64], u: &[f64], scale: f64, out_x: &mut [f64], out_u: &mut [f64]);
}

/// A reduced Hamiltonian system: the control has been eliminated by the
/// maximum principle, leaving a flow in (state, costate).
pub trait ReducedHamiltonian {
    fn state_dim(&self) -> usize;
    /// H̃(x, p).
    fn eval(&self, x: &[f64], p: &[f64]) -> f64;
    /// The canonical flow: `dx = ∂H̃/∂p`, `dp = -∂H̃/∂x`.
    fn flow(&self, x: &[f64], p: &[f64], dx: &mut [f64], dp: &mut [f64]);
    /// Vector-Jacobian product of the flow map: accumulate
    /// `(∂(dx,dp)/∂(x,p))ᵀ (wx, wp)` into `(out_x, out_p)`.
    fn flow_pullback(
        &self,
        x: &[f64],
        p: &[f64],
        wx: &[f64],
        wp: &[f64],
        out_x: &mut [f64],
        out_p: &mut [f64],
    );
    /// Running cost along the flow (the Lagrangian evaluated at the optimal
    /// control implied by (x, p)).
    fn running_cost(&self, x: &[f64], p: &[f64]) -> f64;
    /// Accumulate `scale · ∇_{x,p} running_cost` into `(out_x, out_p)`.
    fn running_cost_grad(&self, x: &[f64], p: &[f64], scale: f64, out_x: &mut [f64], out_p: &mut [f64]);
}

/// Endpoint cost U(x(1)).
pub trait EndpointCost {
    fn cost(&self, x: &[f64]) -> f64;
    /// Accumulate `scale · ∇U(x)` into `out`.
    fn grad(&self, x: &[f64], scale: f64, out: &mut [f64]);
}

/// Zero endpoint cost (free endpoint).
pub struct FreeEndpoint;

impl EndpointCost for FreeEndpoint {
    fn cost(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn grad(&self, _x: &[f64], _scale: f64, _out: &mut [f64]) {}
}

/// A state/costate trajectory on the uniform grid t_k = k/steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state_dim: usize,
    pub times: Vec<f64>,
    /// Flat `(steps+1) * state_dim`.
    pub states: Vec<f64>,
    /// Flat `(steps+1) * state_dim`; present for reduced-Hamiltonian flows.
    pub costates: Option<Vec<f64>>,
    /// H̃ sampled at the grid nodes (reduced flows only).
    pub hamiltonians: Option<Vec<f64>>,
    /// Quadrature of the running cost along the trajectory.
    pub running_cost: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn costate(&self, k: usize) -> Option<&[f64]> {
        self.costates
            .as_ref()
            .map(|c| &c[k * self.state_dim..(k + 1) * self.state_dim])
    }

    /// State at an arbitrary time in [0, 1], linearly interpolated between
    /// grid nodes.
    pub fn sample_state(&self, t: f64) -> Vec<f64> {
        let n = self.state_dim;
        let steps = self.steps();
        let s = (t.clamp(0.0, 1.0)) * steps as f64;
        let k = (s.floor() as usize).min(steps.saturating_sub(1));
        let w = s - k as f64;
        let a = self.state(k);
        if w <= 0.0 || k + 1 > steps {
            return a.to_vec();
        }
        let b = self.state(k + 1);
        (0..n).map(|i| (1.0 - w) * a[i] + w * b[i]).collect()
    }
}

fn check_finite(z: &[f64], step: usize) -> Result<()> {
    if z.iter().any(|v| !v.is_finite()) {
        Err(Error::NonFiniteState { step })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Reduced-Hamiltonian integration (shooting)
// ---------------------------------------------------------------------------

/// Joint state z = (x, p) flow evaluation.
fn ham_flow(ham: &dyn ReducedHamiltonian, z: &[f64], out: &mut [f64]) {
    let n = ham.state_dim();
    let (x, p) = z.split_at(n);
    let (dx, dp) = out.split_at_mut(n);
    ham.flow(x, p, dx, dp);
}

fn ham_flow_pullback(ham: &dyn ReducedHamiltonian, z: &[f64], w: &[f64], out: &mut [f64]) {
    let n = ham.state_dim();
    let (x, p) = z.split_at(n);
    let (wx, wp) = w.split_at(n);
    let (ox, op) = out.split_at_mut(n);
    ham.flow_pullback(x, p, wx, wp, ox, op);
}

/// One classical RK4 step of `ż = F(z)`; returns the new state and the three
/// intermediate stage states (needed by the adjoint pass).
fn rk4_step<F>(z: &[f64], h: f64, mut f: F) -> (Vec<f64>, [Vec<f64>; 3])
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = z.len();
    let mut k1 = vec![0.0; n];
    f(z, &mut k1);
    let mut s2 = z.to_vec();
    axpy(0.5 * h, &k1, &mut s2);
    let mut k2 = vec![0.0; n];
    f(&s2, &mut k2);
    let mut s3 = z.to_vec();
    axpy(0.5 * h, &k2, &mut s3);
    let mut k3 = vec![0.0; n];
    f(&s3, &mut k3);
    let mut s4 = z.to_vec();
    axpy(h, &k3, &mut s4);
    let mut k4 = vec![0.0; n];
    f(&s4, &mut k4);
    let mut out = z.to_vec();
    for i in 0..n {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    (out, [s2, s3, s4])
}

/// Adjoint of one RK4 step: given `lambda = dJ/dz_next`, accumulate
/// `dJ/dz` (returned) and call `stage_pullback(stage_state, mu, out)` for
/// the four stages so the caller can collect control sensitivities.
///
/// `vjp(stage_state, w, out)` must accumulate `(∂F/∂z)ᵀ w` into `out`.
fn rk4_step_adjoint<V, S>(
    z: &[f64],
    stages: &[Vec<f64>; 3],
    h: f64,
    lambda: &[f64],
    mut vjp: V,
    mut stage_hook: S,
) -> Vec<f64>
where
    V: FnMut(&[f64], &[f64], &mut [f64]),
    S: FnMut(&[f64], &[f64]),
{
    let n = z.len();
    // dJ/dk_i recursions (g4 ... g1)
    let mut g4 = vec![0.0; n];
    for i in 0..n {
        g4[i] = h / 6.0 * lambda[i];
    }
    let mut g3 = vec![0.0; n];
    for i in 0..n {
        g3[i] = h / 3.0 * lambda[i];
    }
    let mut tmp = vec![0.0; n];
    vjp(&stages[2], &g4, &mut tmp); // A4ᵀ g4
    axpy(h, &tmp, &mut g3);
    let mut g2 = vec![0.0; n];
    for i in 0..n {
        g2[i] = h / 3.0 * lambda[i];
    }
    tmp.iter_mut().for_each(|v| *v = 0.0);
    vjp(&stages[1], &g3, &mut tmp); // A3ᵀ g3
    axpy(0.5 * h, &tmp, &mut g2);
    let mut g1 = vec![0.0; n];
    for i in 0..n {
        g1[i] = h / 6.0 * lambda[i];
    }
    tmp.iter_mut().for_each(|v| *v = 0.0);
    vjp(&stages[0], &g2, &mut tmp); // A2ᵀ g2
    axpy(0.5 * h, &tmp, &mut g1);

    // dJ/dz = lambda + Σ A_iᵀ g_i, stage states s1=z, s2, s3, s4
    let mut out = lambda.to_vec();
    vjp(z, &g1, &mut out);
    vjp(&stages[0], &g2, &mut out);
    vjp(&stages[1], &g3, &mut out);
    vjp(&stages[2], &g4, &mut out);

    stage_hook(z, &g1);
    stage_hook(&stages[0], &g2);
    stage_hook(&stages[1], &g3);
    stage_hook(&stages[2], &g4);
    out
}

/// Integrate the reduced Hamiltonian system from `(x0, p0)` over [0, 1] with
/// `steps` RK4 steps. Returns states, costates, the Hamiltonian sampled at
/// the nodes and the trapezoid quadrature of the running cost.
pub fn integrate_reduced(
    ham: &dyn ReducedHamiltonian,
    x0: &[f64],
    p0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    assert!(steps >= 1);
    let n = ham.state_dim();
    assert_eq!(x0.len(), n);
    assert_eq!(p0.len(), n);
    let h = 1.0 / steps as f64;
    let mut z = Vec::with_capacity(2 * n);
    z.extend_from_slice(x0);
    z.extend_from_slice(p0);
    check_finite(&z, 0)?;

    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut costates = Vec::with_capacity((steps + 1) * n);
    let mut hams = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut running = 0.0;

    for k in 0..=steps {
        states.extend_from_slice(&z[..n]);
        costates.extend_from_slice(&z[n..]);
        hams.push(ham.eval(&z[..n], &z[n..]));
        times.push(k as f64 / steps as f64);
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        running += h * w * ham.running_cost(&z[..n], &z[n..]);
        if k < steps {
            let (znew, _) = rk4_step(&z, h, |s, out| ham_flow(ham, s, out));
            check_finite(&znew, k + 1)?;
            z = znew;
        }
    }

    Ok(Trajectory {
        state_dim: n,
        times,
        states,
        costates: Some(costates),
        hamiltonians: Some(hams),
        running_cost: running,
    })
}

/// Shooting objective and its gradient with respect to the initial costate:
///
/// ```text
/// J(p0) = trapezoid(running cost) + U(x(1)),    grad = dJ/dp0.
/// ```
pub fn shoot_objective(
    ham: &dyn ReducedHamiltonian,
    endpoint: &dyn EndpointCost,
    x0: &[f64],
    p0: &[f64],
    steps: usize,
) -> Result<(f64, Vec<f64>)> {
    assert!(steps >= 1);
    let n = ham.state_dim();
    let h = 1.0 / steps as f64;
    let mut z = Vec::with_capacity(2 * n);
    z.extend_from_slice(x0);
    z.extend_from_slice(p0);
    check_finite(&z, 0)?;

    // forward pass, storing node states and stage states
    let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut stages: Vec<[Vec<f64>; 3]> = Vec::with_capacity(steps);
    let mut cost = 0.0;
    for k in 0..steps {
        let w = if k == 0 { 0.5 } else { 1.0 };
        cost += h * w * ham.running_cost(&z[..n], &z[n..]);
        nodes.push(z.clone());
        let (znew, st) = rk4_step(&z, h, |s, out| ham_flow(ham, s, out));
        check_finite(&znew, k + 1)?;
        stages.push(st);
        z = znew;
    }
    cost += 0.5 * h * ham.running_cost(&z[..n], &z[n..]);
    cost += endpoint.cost(&z[..n]);
    nodes.push(z.clone());

    // backward pass
    let mut lambda = vec![0.0; 2 * n];
    {
        let (zx, zp) = nodes[steps].split_at(n);
        endpoint.grad(zx, 1.0, &mut lambda[..n]);
        let (lx, lp) = lambda.split_at_mut(n);
        ham.running_cost_grad(zx, zp, 0.5 * h, lx, lp);
    }
    for k in (0..steps).rev() {
        let zk = &nodes[k];
        lambda = rk4_step_adjoint(
            zk,
            &stages[k],
            h,
            &lambda,
            |s, w, out| ham_flow_pullback(ham, s, w, out),
            |_, _| {},
        );
        let w = if k == 0 { 0.5 } else { 1.0 };
        let (zx, zp) = zk.split_at(n);
        let (lx, lp) = lambda.split_at_mut(n);
        ham.running_cost_grad(zx, zp, w * h, lx, lp);
    }
    Ok((cost, lambda[n..].to_vec()))
}

// ---------------------------------------------------------------------------
// Trajectory (direct control) mode
// ---------------------------------------------------------------------------

/// Integrate `ẋ = f(x, u_k)` with the control piecewise constant on each of
/// the `steps` subintervals (one RK4 step per subinterval). Also returns the
/// left-rectangle quadrature of the running cost.
pub fn rollout(
    dynamics: &dyn ControlDynamics,
    x0: &[f64],
    controls: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    assert!(steps >= 1);
    let n = dynamics.state_dim();
    let m = dynamics.control_dim();
    assert_eq!(controls.len(), steps * m, "control array shape mismatch");
    assert_eq!(x0.len(), n);
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    check_finite(&x, 0)?;
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut times = Vec::with_capacity(steps + 1);
    let mut running = 0.0;
    states.extend_from_slice(&x);
    times.push(0.0);
    for k in 0..steps {
        let u = &controls[k * m..(k + 1) * m];
        running += h * dynamics.lagrangian(&x, u);
        let (xn, _) = rk4_step(&x, h, |s, out| dynamics.dynamics(s, u, out));
        check_finite(&xn, k + 1)?;
        x = xn;
        states.extend_from_slice(&x);
        times.push((k + 1) as f64 / steps as f64);
    }
    Ok(Trajectory {
        state_dim: n,
        times,
        states,
        costates: None,
        hamiltonians: None,
        running_cost: running,
    })
}

/// Direct-control objective and gradient:
///
/// ```text
/// J(u) = (1/N) Σ_k L(x_k, u_k) + U(x_N),    grad = dJ/du (flat N * control_dim).
/// ```
pub fn trajectory_objective(
    dynamics: &dyn ControlDynamics,
    endpoint: &dyn EndpointCost,
    x0: &[f64],
    controls: &[f64],
    steps: usize,
) -> Result<(f64, Vec<f64>)> {
    assert!(steps >= 1);
    let n = dynamics.state_dim();
    let m = dynamics.control_dim();
    assert_eq!(controls.len(), steps * m, "control array shape mismatch");
    let h = 1.0 / steps as f64;

    // forward
    let mut x = x0.to_vec();
    check_finite(&x, 0)?;
    let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut stages: Vec<[Vec<f64>; 3]> = Vec::with_capacity(steps);
    let mut cost = 0.0;
    for k in 0..steps {
        let u = &controls[k * m..(k + 1) * m];
        cost += h * dynamics.lagrangian(&x, u);
        nodes.push(x.clone());
        let (xn, st) = rk4_step(&x, h, |s, out| dynamics.dynamics(s, u, out));
        check_finite(&xn, k + 1)?;
        stages.push(st);
        x = xn;
    }
    cost += endpoint.cost(&x);
    nodes.push(x.clone());

    // backward
    let mut grad = vec![0.0; steps * m];
    let mut lambda = vec![0.0; n];
    endpoint.grad(&nodes[steps], 1.0, &mut lambda);
    for k in (0..steps).rev() {
        let u = &controls[k * m..(k + 1) * m];
        let gu = &mut grad[k * m..(k + 1) * m];
        let mut gu_local = vec![0.0; m];
        lambda = rk4_step_adjoint(
            &nodes[k],
            &stages[k],
            h,
            &lambda,
            |s, w, out| {
                let mut dummy_u = vec![0.0; m];
                dynamics.dynamics_pullback(s, u, w, out, &mut dummy_u);
            },
            |s, mu| {
                let mut dummy_x = vec![0.0; n];
                dynamics.dynamics_pullback(s, u, mu, &mut dummy_x, &mut gu_local);
            },
        );
        let mut lx = vec![0.0; n];
        dynamics.lagrangian_grad(&nodes[k], u, h, &mut lx, &mut gu_local);
        axpy(1.0, &lx, &mut lambda);
        gu.copy_from_slice(&gu_local);
    }
    Ok((cost, grad))
}
