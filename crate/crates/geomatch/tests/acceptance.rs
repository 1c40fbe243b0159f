//! End-to-end acceptance checks. Every test prints a single PASS/FAIL line
//! (visible with `--nocapture`) with its wall-clock time, and enforces both
//! the numeric tolerance and a generous runtime budget.

use std::time::Instant;

use geomatch::config::{energy_csv, MatchConfig, Model, SolverMode};
use geomatch::fixtures;
use geomatch::hybrid::{intrinsic_quadform, match_hybrid, IntrinsicStiffness, StiffnessVariant};
use geomatch::intrinsic::{self, SobolevCoeffs};
use geomatch::kernels::DeformationKernel;
use geomatch::lddmm::{match_lddmm, LandmarkDynamics, LandmarkHamiltonian, VarifoldEndpoint};
use geomatch::ocontrol;
use geomatch::varifold::{self, VarifoldKernel};
use geomatch::SimplicialShape;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn criterion(name: &str, budget_seconds: f64, body: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed().as_secs_f64();
    match outcome {
        Ok(()) if elapsed <= budget_seconds => {
            println!("PASS {name} ({elapsed:.2}s)");
        }
        Ok(()) => {
            println!("FAIL {name}: runtime {elapsed:.2}s exceeds budget {budget_seconds}s");
            panic!("{name}: runtime {elapsed:.2}s exceeds budget {budget_seconds}s");
        }
        Err(msg) => {
            println!("FAIL {name}: {msg}");
            panic!("{name}: {msg}");
        }
    }
}

#[test]
fn metric_axioms_on_the_bundled_corpus() {
    criterion("varifold metric axioms (corpus)", 5.0, || {
        let kernel = VarifoldKernel::default();
        let curves = fixtures::curve_corpus();
        let surfaces = fixtures::surface_corpus();
        if curves.len() != 6 || surfaces.len() != 3 {
            return Err(format!(
                "corpus sizes {} / {} (expected 6 curves, 3 surfaces)",
                curves.len(),
                surfaces.len()
            ));
        }
        for corpus in [&curves, &surfaces] {
            // identity: exact zero
            for (name, shape) in corpus.iter() {
                let d = varifold::varifold_dist(shape, shape, &kernel)
                    .map_err(|e| e.to_string())?;
                if d != 0.0 {
                    return Err(format!("d({name},{name}) = {d:e}, expected exactly 0"));
                }
            }
            // symmetry to 1e-12
            let dist = |a: &SimplicialShape, b: &SimplicialShape| {
                varifold::varifold_dist(a, b, &kernel).map_err(|e| e.to_string())
            };
            for (na, a) in corpus.iter() {
                for (nb, b) in corpus.iter() {
                    let ab = dist(a, b)?;
                    let ba = dist(b, a)?;
                    if (ab - ba).abs() > 1e-12 {
                        return Err(format!("asymmetry d({na},{nb}): {ab} vs {ba}"));
                    }
                }
            }
            // triangle inequality with 1e-10 slack over all triples
            for (na, a) in corpus.iter() {
                for (nb, b) in corpus.iter() {
                    for (nc, c) in corpus.iter() {
                        let ac = dist(a, c)?;
                        let ab = dist(a, b)?;
                        let bc = dist(b, c)?;
                        if ac > ab + bc + 1e-10 {
                            return Err(format!(
                                "triangle violation {na},{nb},{nc}: {ac} > {ab} + {bc}"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    });
}

#[test]
fn rigid_motion_invariance_of_distance_and_stiffness() {
    criterion("rigid invariance (50 motions)", 5.0, || {
        let kernel = VarifoldKernel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let a2 = fixtures::circle(24, 1.0, (0.0, 0.0));
        let b2 = fixtures::ellipse(24, 1.3, 0.8);
        let a3 = fixtures::sphere(1, 1.0, (0.0, 0.0, 0.0));
        let b3 = fixtures::sphere(1, 0.7, (0.5, 0.2, -0.1));
        let d2_ref = varifold::varifold_dist_sq(&a2, &b2, &kernel).map_err(|e| e.to_string())?;
        let d3_ref = varifold::varifold_dist_sq(&a3, &b3, &kernel).map_err(|e| e.to_string())?;
        let stiff = IntrinsicStiffness {
            weight: 1.0,
            variant: StiffnessVariant::Full,
        };
        let h2: Vec<f64> = (0..a2.vertices().len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let q2_ref = intrinsic_quadform(&a2, &h2, &stiff).map_err(|e| e.to_string())?;
        let h3: Vec<f64> = (0..a3.vertices().len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let q3_ref = intrinsic_quadform(&a3, &h3, &stiff).map_err(|e| e.to_string())?;
        for trial in 0..50 {
            let dim = if trial % 2 == 0 { 2 } else { 3 };
            let rot = fixtures::random_rotation(dim, &mut rng);
            let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (qa, qb, d_ref, h, q_ref) = if dim == 2 {
                (&a2, &b2, d2_ref, &h2, q2_ref)
            } else {
                (&a3, &b3, d3_ref, &h3, q3_ref)
            };
            let am = qa.rigid_transform(&rot, &shift).map_err(|e| e.to_string())?;
            let bm = qb.rigid_transform(&rot, &shift).map_err(|e| e.to_string())?;
            let d = varifold::varifold_dist_sq(&am, &bm, &kernel).map_err(|e| e.to_string())?;
            if (d - d_ref).abs() > 1e-10 * (1.0 + d_ref.abs()) {
                return Err(format!("trial {trial}: distance {d} vs {d_ref}"));
            }
            // the stiffness form sees the vertex field rotate with the shape
            let mut hm = vec![0.0; h.len()];
            for (src, dst) in h.chunks_exact(dim).zip(hm.chunks_exact_mut(dim)) {
                for r in 0..dim {
                    for c in 0..dim {
                        dst[r] += rot[r * dim + c] * src[c];
                    }
                }
            }
            let q = intrinsic_quadform(&am, &hm, &stiff).map_err(|e| e.to_string())?;
            if (q - q_ref).abs() > 1e-10 * (1.0 + q_ref.abs()) {
                return Err(format!("trial {trial}: quadform {q} vs {q_ref}"));
            }
        }
        Ok(())
    });
}

/// Worst relative coordinate disagreement between a gradient and its
/// central finite-difference estimate.
fn fd_relative_error(grad: &[f64], mut value_at: impl FnMut(usize, f64) -> f64) -> f64 {
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for idx in 0..grad.len() {
        let fp = value_at(idx, eps);
        let fm = value_at(idx, -eps);
        let fd = (fp - fm) / (2.0 * eps);
        worst = worst.max((grad[idx] - fd).abs() / (1.0 + fd.abs()));
    }
    worst
}

#[test]
fn gradient_suites_match_finite_differences() {
    criterion("gradient suites (5 x 20 trials)", 30.0, || {
        let tol = 1e-5;
        let vkernel = VarifoldKernel::default();
        // fidelity gradient on random smooth curve pairs
        for trial in 0..20u64 {
            let shape = fixtures::random_smooth_curve(10, trial);
            let target = fixtures::random_smooth_curve(10, trial + 1000);
            let f1 = geomatch::cell_features(&shape).map_err(|e| e.to_string())?;
            let f2 = geomatch::cell_features(&target).map_err(|e| e.to_string())?;
            let grad = varifold::grad_features(&shape, &f1, &f2, &vkernel);
            let worst = fd_relative_error(&grad, |idx, eps| {
                let mut v = shape.vertices().to_vec();
                v[idx] += eps;
                let s = shape.with_vertices(v).unwrap();
                let f = geomatch::cell_features(&s).unwrap();
                varifold::dist_sq_features(&f, &f2, &vkernel)
            });
            if worst > tol {
                return Err(format!("fidelity gradient trial {trial}: {worst:e}"));
            }
        }
        // spline path energy gradient
        let basis_th = geomatch::spline::BSplineBasis::periodic(6, 4, std::f64::consts::TAU)
            .map_err(|e| e.to_string())?;
        let circle = fixtures::circle(24, 1.0, (0.0, 0.0));
        let (row, _) =
            intrinsic::fit_curve_spline(&basis_th, &circle, 1e-2).map_err(|e| e.to_string())?;
        let coeffs = SobolevCoeffs {
            a0: 1.0,
            a1: 1.0,
            a2: 0.5,
        };
        for trial in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let basis_t = geomatch::spline::BSplineBasis::clamped(3, 3, 0.0, 1.0)
                .map_err(|e| e.to_string())?;
            let mut coef = Vec::new();
            for _ in 0..3 {
                let mut r = row.clone();
                for v in r.iter_mut() {
                    *v += rng.gen_range(-0.05..0.05);
                }
                coef.extend(r);
            }
            let path = intrinsic::SplinePath::new(basis_t, basis_th.clone(), 2, coef)
                .map_err(|e| e.to_string())?;
            let (_, grad) =
                intrinsic::path_energy_grad(&path, &coeffs, 3, 4).map_err(|e| e.to_string())?;
            let worst = fd_relative_error(&grad, |idx, eps| {
                let mut p = path.clone();
                p.coef_mut()[idx] += eps;
                intrinsic::path_energy(&p, &coeffs, 3, 4).unwrap()
            });
            if worst > tol {
                return Err(format!("path energy gradient trial {trial}: {worst:e}"));
            }
        }
        // per-step control objective gradient
        for trial in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
            let shape = fixtures::random_smooth_curve(6, 300 + trial);
            let target = fixtures::random_smooth_curve(6, 400 + trial);
            let dynamics = LandmarkDynamics {
                kernel: DeformationKernel::new(0.8),
                dim: 2,
                num_vertices: 6,
            };
            let endpoint = VarifoldEndpoint::new(&shape, &target, &vkernel, 10.0)
                .map_err(|e| e.to_string())?;
            let steps = 4;
            let x0 = shape.vertices().to_vec();
            let u: Vec<f64> = (0..steps * 12).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let (_, grad) = ocontrol::trajectory_objective(&dynamics, &endpoint, &x0, &u, steps)
                .map_err(|e| e.to_string())?;
            let worst = fd_relative_error(&grad, |idx, eps| {
                let mut up = u.clone();
                up[idx] += eps;
                ocontrol::trajectory_objective(&dynamics, &endpoint, &x0, &up, steps)
                    .unwrap()
                    .0
            });
            if worst > tol {
                return Err(format!("trajectory gradient trial {trial}: {worst:e}"));
            }
        }
        // initial-momentum objective gradient
        for trial in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + trial);
            let shape = fixtures::random_smooth_curve(6, 700 + trial);
            let target = fixtures::random_smooth_curve(6, 800 + trial);
            let ham = LandmarkHamiltonian {
                kernel: DeformationKernel::new(0.8),
                dim: 2,
                num_vertices: 6,
            };
            let endpoint = VarifoldEndpoint::new(&shape, &target, &vkernel, 10.0)
                .map_err(|e| e.to_string())?;
            let x0 = shape.vertices().to_vec();
            let p0: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let steps = 6;
            let (_, grad) = ocontrol::shoot_objective(&ham, &endpoint, &x0, &p0, steps)
                .map_err(|e| e.to_string())?;
            let worst = fd_relative_error(&grad, |idx, eps| {
                let mut pp = p0.clone();
                pp[idx] += eps;
                ocontrol::shoot_objective(&ham, &endpoint, &x0, &pp, steps)
                    .unwrap()
                    .0
            });
            if worst > tol {
                return Err(format!("shooting gradient trial {trial}: {worst:e}"));
            }
        }
        // hybrid running-cost gradients in both arguments
        for trial in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1300 + trial);
            let shape = fixtures::random_smooth_curve(8, 1100 + trial);
            let kernel = DeformationKernel::new(0.8);
            let stiff = IntrinsicStiffness {
                weight: 0.8,
                variant: if trial % 2 == 0 {
                    StiffnessVariant::Full
                } else {
                    StiffnessVariant::Tangential
                },
            };
            let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, gq, ga) = geomatch::hybrid::hybrid_lagrangian_grad(&shape, &a, &kernel, &stiff)
                .map_err(|e| e.to_string())?;
            let worst_q = fd_relative_error(&gq, |idx, eps| {
                let mut v = shape.vertices().to_vec();
                v[idx] += eps;
                let s = shape.with_vertices(v).unwrap();
                geomatch::hybrid::hybrid_lagrangian(&s, &a, &kernel, &stiff).unwrap()
            });
            let worst_a = fd_relative_error(&ga, |idx, eps| {
                let mut ap = a.clone();
                ap[idx] += eps;
                geomatch::hybrid::hybrid_lagrangian(&shape, &ap, &kernel, &stiff).unwrap()
            });
            if worst_q.max(worst_a) > tol {
                return Err(format!(
                    "hybrid lagrangian gradient trial {trial}: q {worst_q:e}, a {worst_a:e}"
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn single_landmark_flows_in_a_straight_line() {
    criterion("single-landmark straight-line oracle", 1.0, || {
        let ham = LandmarkHamiltonian {
            kernel: DeformationKernel::new(0.5),
            dim: 2,
            num_vertices: 1,
        };
        let x0 = [0.3, -0.2];
        let p0 = [0.8, 0.5];
        let traj = ocontrol::integrate_reduced(&ham, &x0, &p0, 50).map_err(|e| e.to_string())?;
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let x = traj.state(k);
            let err = ((x[0] - (x0[0] + t * p0[0])).powi(2)
                + (x[1] - (x0[1] + t * p0[1])).powi(2))
            .sqrt();
            if err > 1e-10 {
                return Err(format!("node {k}: deviation {err:e} > 1e-10"));
            }
        }
        Ok(())
    });
}

#[test]
fn hamiltonian_is_conserved_along_the_flow() {
    criterion("Hamiltonian conservation (5 landmarks)", 1.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let ham = LandmarkHamiltonian {
            kernel: DeformationKernel::new(0.6),
            dim: 2,
            num_vertices: 5,
        };
        let x0: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p0: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let traj = ocontrol::integrate_reduced(&ham, &x0, &p0, 100).map_err(|e| e.to_string())?;
        let hs = traj.hamiltonians.as_ref().expect("reduced flow records H");
        let h0 = hs[0];
        let drift = hs
            .iter()
            .map(|h| (h - h0).abs() / (1.0 + h0.abs()))
            .fold(0.0f64, f64::max);
        if drift > 1e-6 {
            return Err(format!("relative drift {drift:e} > 1e-6"));
        }
        Ok(())
    });
}

fn flow_test_pair() -> (SimplicialShape, SimplicialShape) {
    (
        fixtures::circle(32, 1.0, (0.0, 0.0)),
        fixtures::ellipse(32, 1.2, 0.8),
    )
}

#[test]
fn zero_weight_hybrid_reproduces_the_plain_energy_log() {
    criterion("hybrid weight-0 degeneration (energy.csv)", 60.0, || {
        let (q0, q1) = flow_test_pair();
        let mut lcfg = MatchConfig::for_model(Model::Lddmm);
        lcfg.deformation.sigma = Some(1.0);
        let mut hcfg = MatchConfig::for_model(Model::Hybrid);
        hcfg.deformation.sigma = Some(1.0);
        hcfg.stiffness.weight = 0.0;
        let lres = match_lddmm(&q0, &q1, &lcfg).map_err(|e| e.to_string())?;
        let hres = match_hybrid(&q0, &q1, &hcfg).map_err(|e| e.to_string())?;
        let lcsv = energy_csv(&lres.energy_log, false);
        let hcsv = energy_csv(&hres.energy_log, true);
        let parse = |text: &str| -> Vec<Vec<f64>> {
            text.lines()
                .skip(1)
                .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
                .collect()
        };
        let lrows = parse(&lcsv);
        let hrows = parse(&hcsv);
        if lrows.len() != hrows.len() || lrows.is_empty() {
            return Err(format!(
                "row count mismatch: {} vs {}",
                lrows.len(),
                hrows.len()
            ));
        }
        for (i, (lr, hr)) in lrows.iter().zip(&hrows).enumerate() {
            // shared columns: iter, energy, fidelity, total
            for col in 0..4 {
                if (lr[col] - hr[col]).abs() > 1e-10 {
                    return Err(format!(
                        "row {i} column {col}: {} vs {}",
                        lr[col], hr[col]
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn translated_circle_geodesic_has_near_flat_energy() {
    criterion("translated-circle geodesic (zeroth-order metric)", 120.0, || {
        let q0 = fixtures::circle(48, 1.0, (0.0, 0.0));
        let q1 = fixtures::circle(48, 1.0, (1.0, 0.0));
        let mut cfg = MatchConfig::for_model(Model::Intrinsic);
        cfg.lambda = 1000.0;
        cfg.sobolev = SobolevCoeffs {
            a0: 1.0,
            a1: 0.0,
            a2: 0.0,
        };
        cfg.optim.max_iters = 2000;
        let result = intrinsic::match_intrinsic(&q0, &q1, &cfg).map_err(|e| e.to_string())?;
        let bound = 1.1 * std::f64::consts::TAU;
        if result.report.energy > bound {
            return Err(format!(
                "relaxed energy {} above 1.1 x 2pi = {bound}",
                result.report.energy
            ));
        }
        if result.report.fidelity > 1e-3 {
            return Err(format!("fidelity residual {} > 1e-3", result.report.fidelity));
        }
        Ok(())
    });
}

#[test]
fn all_three_models_match_circle_to_ellipse() {
    let (q0, q1) = flow_test_pair();
    let check = |name: &str, log: &[geomatch::config::EnergyRow], initial: f64, final_fid: f64| {
        if final_fid > 0.05 * initial {
            return Err(format!(
                "{name}: fidelity {final_fid} not reduced 95% from {initial}"
            ));
        }
        for pair in log.windows(2) {
            if pair[1].total > pair[0].total + 1e-12 {
                return Err(format!(
                    "{name}: history increases at iter {}",
                    pair[1].iter
                ));
            }
        }
        Ok(())
    };
    criterion("circle-to-ellipse (intrinsic model)", 120.0, || {
        let mut cfg = MatchConfig::for_model(Model::Intrinsic);
        cfg.lambda = 1000.0;
        let r = intrinsic::match_intrinsic(&q0, &q1, &cfg).map_err(|e| e.to_string())?;
        check(
            "intrinsic",
            &r.energy_log,
            r.report.initial_fidelity,
            r.report.fidelity,
        )
    });
    criterion("circle-to-ellipse (landmark-flow model)", 120.0, || {
        let cfg = MatchConfig::for_model(Model::Lddmm);
        let r = match_lddmm(&q0, &q1, &cfg).map_err(|e| e.to_string())?;
        check(
            "lddmm",
            &r.energy_log,
            r.report.initial_fidelity,
            r.report.fidelity,
        )
    });
    criterion("circle-to-ellipse (hybrid model)", 120.0, || {
        let cfg = MatchConfig::for_model(Model::Hybrid);
        let r = match_hybrid(&q0, &q1, &cfg).map_err(|e| e.to_string())?;
        check(
            "hybrid",
            &r.energy_log,
            r.report.initial_fidelity,
            r.report.fidelity,
        )
    });
}

#[test]
fn refining_the_polygons_converges_with_order_at_least_one() {
    criterion("varifold refinement consistency", 10.0, || {
        let kernel = VarifoldKernel::default();
        let pair_at = |n: usize| {
            (
                fixtures::circle(n, 1.0, (0.0, 0.0)),
                fixtures::ellipse(n, 1.3, 0.8),
            )
        };
        let (r0, r1) = pair_at(512);
        let reference = varifold::varifold_dist_sq(&r0, &r1, &kernel).map_err(|e| e.to_string())?;
        let mut errors = Vec::new();
        for n in [8usize, 16, 32, 64] {
            let (a, b) = pair_at(n);
            let d = varifold::varifold_dist_sq(&a, &b, &kernel).map_err(|e| e.to_string())?;
            errors.push((d - reference).abs());
        }
        for w in errors.windows(2) {
            if !(w[1] < w[0]) {
                return Err(format!("errors not strictly decreasing: {errors:?}"));
            }
        }
        // empirical order across the 8x refinement from N=8 to N=64
        let order = (errors[0] / errors[3]).ln() / 8f64.ln();
        if order < 1.0 {
            return Err(format!("empirical order {order:.3} < 1 (errors {errors:?})"));
        }
        Ok(())
    });
}

#[test]
fn both_solvers_agree_on_the_two_landmark_benchmark() {
    criterion("trajectory vs shooting (two landmarks)", 30.0, || {
        let q0 = SimplicialShape::polyline(2, vec![-0.5, 0.0, 0.5, 0.0], false)
            .map_err(|e| e.to_string())?;
        let q1 = SimplicialShape::polyline(2, vec![-0.4, 0.6, 0.6, 0.5], false)
            .map_err(|e| e.to_string())?;
        let mut tcfg = MatchConfig::for_model(Model::Lddmm);
        tcfg.solver = SolverMode::Trajectory;
        tcfg.deformation.sigma = Some(0.7);
        let mut scfg = tcfg.clone();
        scfg.solver = SolverMode::Shooting;
        let tres = match_lddmm(&q0, &q1, &tcfg).map_err(|e| e.to_string())?;
        let sres = match_lddmm(&q0, &q1, &scfg).map_err(|e| e.to_string())?;
        let te = tres.report.energy;
        let se = sres.report.energy;
        let rel = (te - se).abs() / te.abs().max(se.abs());
        if rel > 0.02 {
            return Err(format!(
                "deformation energies differ by {:.2}%: {te} vs {se}",
                100.0 * rel
            ));
        }
        let tt = tres.report.total;
        let st = sres.report.total;
        let relt = (tt - st).abs() / tt.abs().max(st.abs());
        if relt > 0.02 {
            return Err(format!(
                "objective values differ by {:.2}%: {tt} vs {st}",
                100.0 * relt
            ));
        }
        Ok(())
    });
}

/// Largest |log(edge length change)| over all edges and all integration
/// nodes of a flow, relative to the initial edge lengths.
fn max_log_stretch(shape: &SimplicialShape, traj: &geomatch::ocontrol::Trajectory) -> f64 {
    let d = shape.dim();
    let edge_len = |verts: &[f64], i: usize, j: usize| {
        (0..d)
            .map(|k| (verts[j * d + k] - verts[i * d + k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut worst: f64 = 0.0;
    let base = traj.state(0);
    for k in 1..=traj.steps() {
        let verts = traj.state(k);
        for e in shape.simplices().chunks_exact(2) {
            let l0 = edge_len(base, e[0], e[1]);
            let l1 = edge_len(verts, e[0], e[1]);
            worst = worst.max((l1 / l0).ln().abs());
        }
    }
    worst
}

#[test]
fn stiffness_reduces_edge_compression_on_the_neck_pair() {
    criterion("hybrid neck pair compression", 180.0, || {
        let q0 = fixtures::circle(32, 1.0, (0.0, 0.0));
        let q1 = fixtures::peanut(32, 0.8);
        let mut cfg0 = MatchConfig::for_model(Model::Hybrid);
        // the compression statistic targets tangential stretch, so the
        // stiffness term penalizes exactly that component
        cfg0.stiffness.variant = StiffnessVariant::Tangential;
        cfg0.stiffness.weight = 0.0;
        let mut cfg1 = cfg0.clone();
        cfg1.stiffness.weight = 1.0;
        let r0 = match_hybrid(&q0, &q1, &cfg0).map_err(|e| e.to_string())?;
        let r1 = match_hybrid(&q0, &q1, &cfg1).map_err(|e| e.to_string())?;
        // both runs must actually move toward the target
        for (name, r) in [("weight 0", &r0), ("weight 1", &r1)] {
            if r.report.fidelity > 0.5 * r.report.initial_fidelity {
                return Err(format!(
                    "{name}: match barely moved (fidelity {} from {})",
                    r.report.fidelity, r.report.initial_fidelity
                ));
            }
        }
        let s0 = max_log_stretch(&q0, &r0.trajectory);
        let s1 = max_log_stretch(&q0, &r1.trajectory);
        println!("  max |log stretch|: weight 0 = {s0:.4}, weight 1 = {s1:.4}");
        if !(s1 < s0) {
            return Err(format!(
                "max |log stretch| with stiffness ({s1:.4}) not below the plain flow ({s0:.4})"
            ));
        }
        Ok(())
    });
}
