//! Built-in test shapes.
//!
//! A small deterministic corpus of curves and surfaces used by the self-test
//! command, the integration tests and the benchmarks. All generators are
//! pure functions of their arguments.

use crate::shapes::SimplicialShape;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Closed polyline approximating a circle, `n` vertices.
pub fn circle(n: usize, radius: f64, center: (f64, f64)) -> SimplicialShape {
    let mut v = Vec::with_capacity(2 * n);
    for i in 0..n {
        let th = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
        v.push(center.0 + radius * th.cos());
        v.push(center.1 + radius * th.sin());
    }
    SimplicialShape::polyline(2, v, true).unwrap()
}

/// Closed polyline approximating an axis-aligned ellipse with semi-axes
/// `a`, `b`, centered at the origin.
pub fn ellipse(n: usize, a: f64, b: f64) -> SimplicialShape {
    let mut v = Vec::with_capacity(2 * n);
    for i in 0..n {
        let th = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
        v.push(a * th.cos());
        v.push(b * th.sin());
    }
    SimplicialShape::polyline(2, v, true).unwrap()
}

/// Closed axis-aligned unit square traversed counterclockwise, `n` vertices
/// (`n` must be a multiple of 4).
pub fn square(n: usize) -> SimplicialShape {
    assert!(n % 4 == 0, "square vertex count must be a multiple of 4");
    let per_side = n / 4;
    let corners = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
    let mut v = Vec::with_capacity(2 * n);
    for side in 0..4 {
        let (x0, y0) = corners[side];
        let (x1, y1) = corners[(side + 1) % 4];
        for k in 0..per_side {
            let t = k as f64 / per_side as f64;
            v.push(x0 + t * (x1 - x0));
            v.push(y0 + t * (y1 - y0));
        }
    }
    SimplicialShape::polyline(2, v, true).unwrap()
}

/// Closed star polygon with `points` spikes, alternating radii `r_outer`
/// and `r_inner`; `n` vertices total (`n` must be a multiple of
/// `2 * points`).
pub fn star(n: usize, points: usize, r_inner: f64, r_outer: f64) -> SimplicialShape {
    assert!(n % (2 * points) == 0, "star vertex count must be a multiple of 2*points");
    let mut corners = Vec::with_capacity(2 * points);
    for k in 0..2 * points {
        let th = std::f64::consts::PI * (k as f64) / (points as f64);
        let r = if k % 2 == 0 { r_outer } else { r_inner };
        corners.push((r * th.cos(), r * th.sin()));
    }
    let per_edge = n / (2 * points);
    let mut v = Vec::with_capacity(2 * n);
    for e in 0..2 * points {
        let (x0, y0) = corners[e];
        let (x1, y1) = corners[(e + 1) % (2 * points)];
        for k in 0..per_edge {
            let t = k as f64 / per_edge as f64;
            v.push(x0 + t * (x1 - x0));
            v.push(y0 + t * (y1 - y0));
        }
    }
    SimplicialShape::polyline(2, v, true).unwrap()
}

/// A pinched oval ("peanut"): r(θ)² = 1 + c·cos(2θ) with `c` in (0, 1).
/// The neck sits on the y-axis; larger `c` means a tighter neck.
pub fn peanut(n: usize, c: f64) -> SimplicialShape {
    assert!(c > 0.0 && c < 1.0);
    let mut v = Vec::with_capacity(2 * n);
    for i in 0..n {
        let th = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
        let r = (1.0 + c * (2.0 * th).cos()).sqrt();
        v.push(r * th.cos());
        v.push(r * th.sin());
    }
    SimplicialShape::polyline(2, v, true).unwrap()
}

/// Open sine arc from x=0 to x=1, `n` vertices.
pub fn arc(n: usize) -> SimplicialShape {
    let mut v = Vec::with_capacity(2 * n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        v.push(t);
        v.push(0.3 * (std::f64::consts::PI * t).sin());
    }
    SimplicialShape::polyline(2, v, false).unwrap()
}

/// Triangulated sphere: an octahedron subdivided `levels` times with the
/// vertices projected back onto the sphere. Outward-oriented.
pub fn sphere(levels: usize, radius: f64, center: (f64, f64, f64)) -> SimplicialShape {
    let verts = vec![
        1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, //
        0.0, -1.0, 0.0, //
        0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0,
    ];
    // Octahedron faces, outward (counterclockwise seen from outside).
    let tris = vec![
        0, 2, 4, 2, 1, 4, 1, 3, 4, 3, 0, 4, //
        2, 0, 5, 1, 2, 5, 3, 1, 5, 0, 3, 5,
    ];
    let mut s = SimplicialShape::surface(verts, tris).unwrap();
    for _ in 0..levels {
        s = s.subdivide().unwrap();
        let mut v = s.vertices().to_vec();
        for p in v.chunks_mut(3) {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            for x in p.iter_mut() {
                *x /= n;
            }
        }
        s = s.with_vertices(v).unwrap();
    }
    let mut v = s.vertices().to_vec();
    for p in v.chunks_mut(3) {
        p[0] = center.0 + radius * p[0];
        p[1] = center.1 + radius * p[1];
        p[2] = center.2 + radius * p[2];
    }
    s.with_vertices(v).unwrap()
}

/// Open patch of a torus (major radius `major`, minor radius `minor`):
/// three quarters of the tube, triangulated on an `nu x nv` grid.
pub fn torus_patch(nu: usize, nv: usize, major: f64, minor: f64) -> SimplicialShape {
    assert!(nu >= 2 && nv >= 2);
    let mut verts = Vec::with_capacity(3 * nu * nv);
    for i in 0..nu {
        let u = 1.5 * std::f64::consts::PI * (i as f64) / ((nu - 1) as f64);
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * (j as f64) / (nv as f64);
            let r = major + minor * v.cos();
            verts.push(r * u.cos());
            verts.push(r * u.sin());
            verts.push(minor * v.sin());
        }
    }
    let mut tris = Vec::new();
    let at = |i: usize, j: usize| i * nv + (j % nv);
    for i in 0..nu - 1 {
        for j in 0..nv {
            tris.extend_from_slice(&[at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            tris.extend_from_slice(&[at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    SimplicialShape::surface(verts, tris).unwrap()
}

/// The six-curve desk corpus used by the metric-axiom checks.
pub fn curve_corpus() -> Vec<(&'static str, SimplicialShape)> {
    vec![
        ("circle", circle(32, 1.0, (0.0, 0.0))),
        ("ellipse", ellipse(32, 1.4, 0.7)),
        ("square", square(32)),
        ("star", star(40, 5, 0.5, 1.1)),
        ("peanut", peanut(32, 0.8)),
        ("shifted_circle", circle(32, 0.8, (0.9, -0.4))),
    ]
}

/// The three-surface desk corpus.
pub fn surface_corpus() -> Vec<(&'static str, SimplicialShape)> {
    vec![
        ("sphere_a", sphere(2, 1.0, (0.0, 0.0, 0.0))),
        ("sphere_b", sphere(1, 0.6, (0.8, 0.3, -0.2))),
        ("torus_patch", torus_patch(10, 8, 1.0, 0.35)),
    ]
}

/// Random smooth closed curve: a unit circle modulated by a few random
/// Fourier harmonics (small amplitudes keep it embedded), sampled at `n`
/// vertices. Deterministic in `seed`.
pub fn random_smooth_curve(n: usize, seed: u64) -> SimplicialShape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonics = 4;
    let coefs: Vec<(f64, f64)> = (0..harmonics)
        .map(|_| (rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12)))
        .collect();
    let mut v = Vec::with_capacity(2 * n);
    for i in 0..n {
        let th = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
        let mut r = 1.0;
        for (k, (a, b)) in coefs.iter().enumerate() {
            let m = (k + 2) as f64;
            r += a * (m * th).cos() + b * (m * th).sin();
        }
        v.push(r * th.cos());
        v.push(r * th.sin());
    }
    SimplicialShape::polyline(2, v, true).unwrap()
}

/// Random rotation matrix (row-major `dim x dim`), deterministic in the RNG.
pub fn random_rotation(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    match dim {
        2 => {
            let th: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            vec![th.cos(), -th.sin(), th.sin(), th.cos()]
        }
        3 => {
            // rotation from a uniformly random unit quaternion
            let (q0, q1, q2, q3) = loop {
                let q: [f64; 4] = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
                }
            };
            vec![
                1.0 - 2.0 * (q2 * q2 + q3 * q3),
                2.0 * (q1 * q2 - q0 * q3),
                2.0 * (q1 * q3 + q0 * q2),
                2.0 * (q1 * q2 + q0 * q3),
                1.0 - 2.0 * (q1 * q1 + q3 * q3),
                2.0 * (q2 * q3 - q0 * q1),
                2.0 * (q1 * q3 - q0 * q2),
                2.0 * (q2 * q3 + q0 * q1),
                1.0 - 2.0 * (q1 * q1 + q2 * q2),
            ]
        }
        _ => panic!("dim must be 2 or 3"),
    }
}
