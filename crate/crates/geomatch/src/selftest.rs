//! Fast deterministic self-checks, exposed to the CLI's `selftest`
//! subcommand. Every check is seeded and allocation-order deterministic, so
//! two runs produce byte-identical reports; the whole suite finishes in
//! seconds.

use crate::error::Result;
use crate::fixtures;
use crate::kernels::DeformationKernel;
use crate::shapes::{cell_features, CellFeatures, SimplicialShape};
use crate::varifold::{self, VarifoldKernel};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

type CheckResult = std::result::Result<(), String>;

/// A named self-check.
pub struct Check {
    pub name: &'static str,
    run: Box<dyn Fn() -> CheckResult>,
}

impl Check {
    fn new(name: &'static str, run: impl Fn() -> CheckResult + 'static) -> Self {
        Check {
            name,
            run: Box::new(run),
        }
    }

    pub fn run(&self) -> CheckResult {
        (self.run)()
    }
}

/// Compare the supplied varifold gradient routine against central finite
/// differences on a fixed pair of curves. Taking the routine as an argument
/// lets the test suite verify that a corrupted gradient is caught.
pub fn varifold_gradient_check(
    grad_fn: &dyn Fn(&SimplicialShape, &CellFeatures, &CellFeatures, &VarifoldKernel) -> Vec<f64>,
) -> CheckResult {
    let kernel = VarifoldKernel::default();
    let shape = fixtures::circle(10, 1.0, (0.0, 0.0));
    let target = fixtures::ellipse(12, 1.3, 0.8);
    let f1 = cell_features(&shape).map_err(|e| e.to_string())?;
    let f2 = cell_features(&target).map_err(|e| e.to_string())?;
    let grad = grad_fn(&shape, &f1, &f2, &kernel);
    let eps = 1e-6;
    for idx in 0..shape.vertices().len() {
        let mut vp = shape.vertices().to_vec();
        let mut vm = vp.clone();
        vp[idx] += eps;
        vm[idx] -= eps;
        let dp = dist_of(&shape, vp, &f2, &kernel)?;
        let dm = dist_of(&shape, vm, &f2, &kernel)?;
        let fd = (dp - dm) / (2.0 * eps);
        if (grad[idx] - fd).abs() > 1e-5 * (1.0 + fd.abs()) {
            return Err(format!(
                "coordinate {idx}: gradient {:.6e} vs finite difference {fd:.6e}",
                grad[idx]
            ));
        }
    }
    Ok(())
}

fn dist_of(
    template: &SimplicialShape,
    vertices: Vec<f64>,
    target: &CellFeatures,
    kernel: &VarifoldKernel,
) -> std::result::Result<f64, String> {
    let shape = template.with_vertices(vertices).map_err(|e| e.to_string())?;
    let f = cell_features(&shape).map_err(|e| e.to_string())?;
    Ok(varifold::dist_sq_features(&f, target, kernel))
}

/// The default suite: metric sanity on the bundled corpus, analytic
/// oracles, conservation laws, and spot finite-difference checks.
pub fn default_checks() -> Vec<Check> {
    vec![
        Check::new("varifold-self-distance-is-zero", || {
            let kernel = VarifoldKernel::default();
            for (name, shape) in fixtures::curve_corpus() {
                let d = varifold::varifold_dist_sq(&shape, &shape, &kernel)
                    .map_err(|e| e.to_string())?;
                if d != 0.0 {
                    return Err(format!("{name}: d²(q,q) = {d:e}"));
                }
            }
            Ok(())
        }),
        Check::new("varifold-symmetry", || {
            let kernel = VarifoldKernel::default();
            let corpus = fixtures::curve_corpus();
            for (na, a) in &corpus {
                for (nb, b) in &corpus {
                    let ab = varifold::varifold_dist_sq(a, b, &kernel)
                        .map_err(|e| e.to_string())?;
                    let ba = varifold::varifold_dist_sq(b, a, &kernel)
                        .map_err(|e| e.to_string())?;
                    if (ab - ba).abs() > 1e-12 {
                        return Err(format!("{na} vs {nb}: {ab} != {ba}"));
                    }
                }
            }
            Ok(())
        }),
        Check::new("varifold-parallel-segments-closed-form", || {
            // two parallel unit segments at distance 1: d² = 2 − 2e^{−1}
            let a = SimplicialShape::polyline(2, vec![0.0, 0.0, 1.0, 0.0], false)
                .map_err(|e| e.to_string())?;
            let b = SimplicialShape::polyline(2, vec![0.0, 1.0, 1.0, 1.0], false)
                .map_err(|e| e.to_string())?;
            let kernel = VarifoldKernel {
                spatial: crate::kernels::SpatialProfile::Gaussian { sigma: 1.0 },
                spherical: crate::kernels::SphericalProfile::Linear,
            };
            let d = varifold::varifold_dist_sq(&a, &b, &kernel).map_err(|e| e.to_string())?;
            let expected = 2.0 - 2.0 * (-1.0f64).exp();
            if (d - expected).abs() > 1e-12 {
                return Err(format!("{d} vs closed form {expected}"));
            }
            Ok(())
        }),
        Check::new("varifold-gradient-matches-fd", || {
            varifold_gradient_check(&|shape, f1, f2, kernel| {
                varifold::grad_features(shape, f1, f2, kernel)
            })
        }),
        Check::new("varifold-rigid-invariance", || {
            let kernel = VarifoldKernel::default();
            let a = fixtures::circle(12, 1.0, (0.0, 0.0));
            let b = fixtures::ellipse(14, 1.2, 0.7);
            let d0 = varifold::varifold_dist_sq(&a, &b, &kernel).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(100);
            for _ in 0..5 {
                let rot = fixtures::random_rotation(2, &mut rng);
                let t = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let am = a.rigid_transform(&rot, &t).map_err(|e| e.to_string())?;
                let bm = b.rigid_transform(&rot, &t).map_err(|e| e.to_string())?;
                let d = varifold::varifold_dist_sq(&am, &bm, &kernel)
                    .map_err(|e| e.to_string())?;
                if (d - d0).abs() > 1e-10 * (1.0 + d0) {
                    return Err(format!("moved distance {d} vs {d0}"));
                }
            }
            Ok(())
        }),
        Check::new("single-landmark-flows-straight", || {
            let ham = crate::lddmm::LandmarkHamiltonian {
                kernel: DeformationKernel::new(0.5),
                dim: 2,
                num_vertices: 1,
            };
            let x0 = [0.2, -0.1];
            let p0 = [0.7, 0.4];
            let traj = crate::ocontrol::integrate_reduced(&ham, &x0, &p0, 50)
                .map_err(|e| e.to_string())?;
            for k in 0..=50 {
                let t = k as f64 / 50.0;
                let x = traj.state(k);
                let err = ((x[0] - (x0[0] + t * p0[0])).powi(2)
                    + (x[1] - (x0[1] + t * p0[1])).powi(2))
                .sqrt();
                if err > 1e-10 {
                    return Err(format!("step {k}: deviation {err:e}"));
                }
            }
            Ok(())
        }),
        Check::new("hamiltonian-is-conserved", || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let ham = crate::lddmm::LandmarkHamiltonian {
                kernel: DeformationKernel::new(0.6),
                dim: 2,
                num_vertices: 5,
            };
            let x0: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p0: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let traj = crate::ocontrol::integrate_reduced(&ham, &x0, &p0, 100)
                .map_err(|e| e.to_string())?;
            let hs = traj.hamiltonians.as_ref().expect("costate flow");
            let h0 = hs[0];
            for h in hs {
                if (h - h0).abs() > 1e-6 * (1.0 + h0.abs()) {
                    return Err(format!("drift {:e}", (h - h0).abs()));
                }
            }
            Ok(())
        }),
        Check::new("spline-bases-partition-unity", || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let clamped = crate::spline::BSplineBasis::clamped(9, 4, 0.0, 1.0)
                .map_err(|e| e.to_string())?;
            let periodic =
                crate::spline::BSplineBasis::periodic(11, 4, std::f64::consts::TAU)
                    .map_err(|e| e.to_string())?;
            for basis in [&clamped, &periodic] {
                for _ in 0..20 {
                    let t = rng.gen_range(-1.0..7.0);
                    let (_, vals) = basis.eval(t, 0);
                    let s: f64 = vals[0].iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return Err(format!("sum {s} at t={t}"));
                    }
                }
            }
            Ok(())
        }),
        Check::new("path-energy-gradient-matches-fd", || {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let basis_th = crate::spline::BSplineBasis::periodic(6, 4, std::f64::consts::TAU)
                .map_err(|e| e.to_string())?;
            let shape = fixtures::circle(24, 1.0, (0.0, 0.0));
            let (row, _) = crate::intrinsic::fit_curve_spline(&basis_th, &shape, 1e-2)
                .map_err(|e| e.to_string())?;
            let basis_t = crate::spline::BSplineBasis::clamped(3, 3, 0.0, 1.0)
                .map_err(|e| e.to_string())?;
            let mut coef = Vec::new();
            for _ in 0..3 {
                let mut r = row.clone();
                for v in r.iter_mut() {
                    *v += rng.gen_range(-0.05..0.05);
                }
                coef.extend(r);
            }
            let path = crate::intrinsic::SplinePath::new(basis_t, basis_th, 2, coef)
                .map_err(|e| e.to_string())?;
            let coeffs = crate::intrinsic::SobolevCoeffs {
                a0: 1.0,
                a1: 1.0,
                a2: 0.5,
            };
            let (_, grad) = crate::intrinsic::path_energy_grad(&path, &coeffs, 3, 4)
                .map_err(|e| e.to_string())?;
            let eps = 1e-6;
            for idx in (0..path.coef().len()).step_by(5) {
                let mut pp = path.clone();
                pp.coef_mut()[idx] += eps;
                let mut pm = path.clone();
                pm.coef_mut()[idx] -= eps;
                let fp = crate::intrinsic::path_energy(&pp, &coeffs, 3, 4)
                    .map_err(|e| e.to_string())?;
                let fm = crate::intrinsic::path_energy(&pm, &coeffs, 3, 4)
                    .map_err(|e| e.to_string())?;
                let fd = (fp - fm) / (2.0 * eps);
                if (grad[idx] - fd).abs() > 1e-4 * (1.0 + fd.abs()) {
                    return Err(format!("coef {idx}: {:.6e} vs {fd:.6e}", grad[idx]));
                }
            }
            Ok(())
        }),
        Check::new("shooting-gradient-matches-fd", || {
            let mut rng = ChaCha8Rng::seed_from_u64(41);
            let shape = fixtures::circle(5, 1.0, (0.0, 0.0));
            let target = fixtures::circle(5, 1.0, (0.3, 0.2));
            let vkernel = VarifoldKernel::default();
            let endpoint =
                crate::lddmm::VarifoldEndpoint::new(&shape, &target, &vkernel, 10.0)
                    .map_err(|e| e.to_string())?;
            let ham = crate::lddmm::LandmarkHamiltonian {
                kernel: DeformationKernel::new(0.7),
                dim: 2,
                num_vertices: 5,
            };
            let x0 = shape.vertices().to_vec();
            let p0: Vec<f64> = (0..10).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let (_, grad) = crate::ocontrol::shoot_objective(&ham, &endpoint, &x0, &p0, 8)
                .map_err(|e| e.to_string())?;
            let eps = 1e-6;
            for idx in 0..10 {
                let mut pp = p0.clone();
                let mut pm = p0.clone();
                pp[idx] += eps;
                pm[idx] -= eps;
                let (fp, _) = crate::ocontrol::shoot_objective(&ham, &endpoint, &x0, &pp, 8)
                    .map_err(|e| e.to_string())?;
                let (fm, _) = crate::ocontrol::shoot_objective(&ham, &endpoint, &x0, &pm, 8)
                    .map_err(|e| e.to_string())?;
                let fd = (fp - fm) / (2.0 * eps);
                if (grad[idx] - fd).abs() > 1e-5 * (1.0 + fd.abs()) {
                    return Err(format!("momentum {idx}: {:.6e} vs {fd:.6e}", grad[idx]));
                }
            }
            Ok(())
        }),
        Check::new("stiffness-weight-zero-degenerates", || {
            let mut rng = ChaCha8Rng::seed_from_u64(51);
            let shape = fixtures::circle(7, 1.0, (0.0, 0.0));
            let a: Vec<f64> = (0..14).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let kernel = DeformationKernel::new(0.8);
            let stiff = crate::hybrid::IntrinsicStiffness {
                weight: 0.0,
                variant: crate::hybrid::StiffnessVariant::Full,
            };
            let hybrid = crate::hybrid::hybrid_lagrangian(&shape, &a, &kernel, &stiff)
                .map_err(|e| e.to_string())?;
            let plain =
                crate::lddmm::lddmm_lagrangian(&kernel, shape.vertices(), &a, shape.dim());
            if (hybrid - plain).abs() > 1e-14 * (1.0 + plain.abs()) {
                return Err(format!("{hybrid} vs {plain}"));
            }
            Ok(())
        }),
    ]
}

/// Run every check, writing one `PASS`/`FAIL` line per check; returns true
/// iff all passed.
pub fn run_all(out: &mut dyn std::io::Write) -> Result<bool> {
    let mut ok = true;
    for check in default_checks() {
        match check.run() {
            Ok(()) => writeln!(out, "PASS {}", check.name)?,
            Err(msg) => {
                ok = false;
                writeln!(out, "FAIL {}: {msg}", check.name)?;
            }
        }
    }
    Ok(ok)
}
