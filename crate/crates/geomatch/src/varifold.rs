//! Oriented-varifold fidelity between discrete shapes.
//!
//! Every simplex contributes a weighted Dirac at (barycenter, unit
//! orientation) with its measure as weight. The inner product between two
//! shapes is the double sum
//!
//! ```text
//! ⟨μ1, μ2⟩ = Σ_i Σ_j ρ(|x̄_i - ȳ_j|²) · γ(⟨t_i, u_j⟩) · w_i · v_j
//! ```
//!
//! (one-point quadrature at the barycenters), and the squared chordal
//! distance is ‖μ1‖² - 2⟨μ1, μ2⟩ + ‖μ2‖². The distance compares shapes
//! without any correspondence between their vertex sets, which is what
//! makes it usable as an endpoint cost for all three matching models.
//!
//! The double sums are embarrassingly parallel over the outer index; the
//! reduction order within each row and across rows is fixed, so results are
//! identical regardless of thread count.

use crate::error::{Error, Result};
use crate::kernels::{SpatialProfile, SphericalProfile};
use crate::linalg::cross3;
use crate::shapes::{cell_features, CellFeatures, ShapeKind, SimplicialShape};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Kernel pair defining the oriented-varifold inner product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarifoldKernel {
    pub spatial: SpatialProfile,
    pub spherical: SphericalProfile,
}

impl Default for VarifoldKernel {
    fn default() -> Self {
        VarifoldKernel {
            spatial: SpatialProfile::Gaussian { sigma: 0.5 },
            spherical: SphericalProfile::Linear,
        }
    }
}

fn check_comparable(s1: &SimplicialShape, s2: &SimplicialShape) -> Result<()> {
    if s1.kind() != s2.kind() {
        return Err(Error::KindMismatch(
            s1.kind().name().into(),
            s2.kind().name().into(),
        ));
    }
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch(s1.dim(), s2.dim()));
    }
    Ok(())
}

/// ⟨μ1, μ2⟩ for precomputed cell features.
pub fn inner_features(fa: &CellFeatures, fb: &CellFeatures, kernel: &VarifoldKernel) -> f64 {
    let d = fa.dim;
    let rows: Vec<f64> = (0..fa.len())
        .into_par_iter()
        .map(|i| {
            let xi = fa.barycenter(i);
            let ti = fa.orientation(i);
            let wi = fa.measures[i];
            let mut row = 0.0;
            for j in 0..fb.len() {
                let yj = fb.barycenter(j);
                let uj = fb.orientation(j);
                let r2 = crate::linalg::dist2(xi, yj);
                let c: f64 = (0..d).map(|k| ti[k] * uj[k]).sum();
                row += kernel.spatial.eval(r2) * kernel.spherical.eval(c) * fb.measures[j];
            }
            row * wi
        })
        .collect();
    rows.iter().sum()
}

/// Varifold inner product ⟨μ1, μ2⟩ between two shapes of the same kind and
/// ambient dimension.
pub fn varifold_inner(
    s1: &SimplicialShape,
    s2: &SimplicialShape,
    kernel: &VarifoldKernel,
) -> Result<f64> {
    check_comparable(s1, s2)?;
    let f1 = cell_features(s1)?;
    let f2 = cell_features(s2)?;
    Ok(inner_features(&f1, &f2, kernel))
}

/// Squared chordal varifold distance, clamped below at zero.
pub fn varifold_dist_sq(
    s1: &SimplicialShape,
    s2: &SimplicialShape,
    kernel: &VarifoldKernel,
) -> Result<f64> {
    check_comparable(s1, s2)?;
    let f1 = cell_features(s1)?;
    let f2 = cell_features(s2)?;
    Ok(dist_sq_features(&f1, &f2, kernel))
}

/// Squared chordal distance for precomputed features.
pub fn dist_sq_features(f1: &CellFeatures, f2: &CellFeatures, kernel: &VarifoldKernel) -> f64 {
    let d = inner_features(f1, f1, kernel) - 2.0 * inner_features(f1, f2, kernel)
        + inner_features(f2, f2, kernel);
    d.max(0.0)
}

/// Chordal varifold distance.
pub fn varifold_dist(
    s1: &SimplicialShape,
    s2: &SimplicialShape,
    kernel: &VarifoldKernel,
) -> Result<f64> {
    Ok(varifold_dist_sq(s1, s2, kernel)?.sqrt())
}

/// Gradients of an inner product with respect to the features of its first
/// argument.
pub struct FeatureGrads {
    pub dim: usize,
    pub barycenters: Vec<f64>,
    pub orientations: Vec<f64>,
    pub measures: Vec<f64>,
}

/// ∂⟨μ_a, μ_b⟩ / ∂(features of a), holding b fixed.
pub fn inner_grad_features(
    fa: &CellFeatures,
    fb: &CellFeatures,
    kernel: &VarifoldKernel,
) -> FeatureGrads {
    let d = fa.dim;
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..fa.len())
        .into_par_iter()
        .map(|i| {
            let xi = fa.barycenter(i);
            let ti = fa.orientation(i);
            let wi = fa.measures[i];
            let mut gb = vec![0.0; d];
            let mut go = vec![0.0; d];
            let mut gm = 0.0;
            for j in 0..fb.len() {
                let yj = fb.barycenter(j);
                let uj = fb.orientation(j);
                let vj = fb.measures[j];
                let r2 = crate::linalg::dist2(xi, yj);
                let c: f64 = (0..d).map(|k| ti[k] * uj[k]).sum();
                let rho = kernel.spatial.eval(r2);
                let gam = kernel.spherical.eval(c);
                let drho = kernel.spatial.deriv(r2);
                let dgam = kernel.spherical.deriv(c);
                for k in 0..d {
                    gb[k] += drho * 2.0 * (xi[k] - yj[k]) * gam * wi * vj;
                    go[k] += rho * dgam * uj[k] * wi * vj;
                }
                gm += rho * gam * vj;
            }
            (gb, go, gm)
        })
        .collect();
    let mut grads = FeatureGrads {
        dim: d,
        barycenters: vec![0.0; fa.len() * d],
        orientations: vec![0.0; fa.len() * d],
        measures: vec![0.0; fa.len()],
    };
    for (i, (gb, go, gm)) in rows.into_iter().enumerate() {
        grads.barycenters[i * d..(i + 1) * d].copy_from_slice(&gb);
        grads.orientations[i * d..(i + 1) * d].copy_from_slice(&go);
        grads.measures[i] = gm;
    }
    grads
}

/// Chain feature-level gradients back to the vertices of `shape`.
///
/// The orientation entries of `grads` are taken with respect to the *unit*
/// orientation vector; the normalization is differentiated here.
pub fn feature_grads_to_vertices(shape: &SimplicialShape, grads: &FeatureGrads) -> Vec<f64> {
    let d = shape.dim();
    let mut out = vec![0.0; shape.num_vertices() * d];
    match shape.kind() {
        ShapeKind::Curve => {
            for s in 0..shape.num_simplices() {
                let sx = shape.simplex(s);
                let (a, b) = (sx[0], sx[1]);
                let qa = shape.vertex(a);
                let qb = shape.vertex(b);
                let gb = &grads.barycenters[s * d..(s + 1) * d];
                let go = &grads.orientations[s * d..(s + 1) * d];
                let gm = grads.measures[s];
                let x: Vec<f64> = (0..d).map(|k| qb[k] - qa[k]).collect();
                let len = crate::linalg::norm(&x);
                let t: Vec<f64> = x.iter().map(|v| v / len).collect();
                // (I - t tᵀ) go / len
                let tg: f64 = (0..d).map(|k| t[k] * go[k]).sum();
                for k in 0..d {
                    let proj = (go[k] - tg * t[k]) / len;
                    let tail = 0.5 * gb[k] - gm * t[k] - proj;
                    let head = 0.5 * gb[k] + gm * t[k] + proj;
                    out[a * d + k] += tail;
                    out[b * d + k] += head;
                }
            }
        }
        ShapeKind::Surface => {
            for s in 0..shape.num_simplices() {
                let sx = shape.simplex(s);
                let (a, b, c) = (sx[0], sx[1], sx[2]);
                let qa = shape.vertex(a);
                let qb = shape.vertex(b);
                let qc = shape.vertex(c);
                let gb = &grads.barycenters[s * 3..(s + 1) * 3];
                let go = &grads.orientations[s * 3..(s + 1) * 3];
                let gm = grads.measures[s];
                let e1 = [qb[0] - qa[0], qb[1] - qa[1], qb[2] - qa[2]];
                let e2 = [qc[0] - qa[0], qc[1] - qa[1], qc[2] - qa[2]];
                let n = cross3(&e1, &e2);
                let nn = crate::linalg::norm(&n);
                let nu = [n[0] / nn, n[1] / nn, n[2] / nn];
                // gradient with respect to the unnormalized normal n:
                // measure = |n|/2 and orientation = n/|n|
                let nug: f64 = (0..3).map(|k| nu[k] * go[k]).sum();
                let mut gn = [0.0; 3];
                for k in 0..3 {
                    gn[k] = 0.5 * gm * nu[k] + (go[k] - nug * nu[k]) / nn;
                }
                let ge1 = cross3(&e2, &gn);
                let ge2 = cross3(&gn, &e1);
                for k in 0..3 {
                    out[a * 3 + k] += gb[k] / 3.0 - ge1[k] - ge2[k];
                    out[b * 3 + k] += gb[k] / 3.0 + ge1[k];
                    out[c * 3 + k] += gb[k] / 3.0 + ge2[k];
                }
            }
        }
    }
    out
}

/// Gradient of `varifold_dist_sq(s1, s2)` with respect to the vertex
/// coordinates of `s1` (flat `num_vertices * dim` array).
pub fn varifold_grad(
    s1: &SimplicialShape,
    s2: &SimplicialShape,
    kernel: &VarifoldKernel,
) -> Result<Vec<f64>> {
    check_comparable(s1, s2)?;
    let f1 = cell_features(s1)?;
    let f2 = cell_features(s2)?;
    Ok(grad_features(s1, &f1, &f2, kernel))
}

/// Gradient of the squared distance for precomputed features; `shape1` is
/// the shape whose features are `f1`.
pub fn grad_features(
    shape1: &SimplicialShape,
    f1: &CellFeatures,
    f2: &CellFeatures,
    kernel: &VarifoldKernel,
) -> Vec<f64> {
    // d/df1 [⟨μ1,μ1⟩ - 2⟨μ1,μ2⟩]: the self term is symmetric in its two
    // slots, so its derivative is twice the one-slot derivative.
    let self_part = inner_grad_features(f1, f1, kernel);
    let cross_part = inner_grad_features(f1, f2, kernel);
    let d = f1.dim;
    let combined = FeatureGrads {
        dim: d,
        barycenters: self_part
            .barycenters
            .iter()
            .zip(&cross_part.barycenters)
            .map(|(s, c)| 2.0 * (s - c))
            .collect(),
        orientations: self_part
            .orientations
            .iter()
            .zip(&cross_part.orientations)
            .map(|(s, c)| 2.0 * (s - c))
            .collect(),
        measures: self_part
            .measures
            .iter()
            .zip(&cross_part.measures)
            .map(|(s, c)| 2.0 * (s - c))
            .collect(),
    };
    feature_grads_to_vertices(shape1, &combined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::shapes::SimplicialShape;

    fn gaussian_linear(sigma: f64) -> VarifoldKernel {
        VarifoldKernel {
            spatial: SpatialProfile::Gaussian { sigma },
            spherical: SphericalProfile::Linear,
        }
    }

    fn segment(p: [f64; 2], q: [f64; 2]) -> SimplicialShape {
        SimplicialShape::curve(2, vec![p[0], p[1], q[0], q[1]], vec![0, 1], false).unwrap()
    }

    #[test]
    fn parallel_unit_segments_match_closed_form() {
        // two parallel unit segments offset by D with equal orientations:
        // each has a single cell of mass 1, so
        // d² = 1 + 1 - 2·ρ(D²) = 2 - 2·exp(-D²/σ²)
        let k = gaussian_linear(1.0);
        for dist in [0.5, 1.0, 2.0] {
            let s1 = segment([0.0, 0.0], [1.0, 0.0]);
            let s2 = segment([0.0, dist], [1.0, dist]);
            let expect = 2.0 - 2.0 * (-dist * dist).exp();
            let got = varifold_dist_sq(&s1, &s2, &k).unwrap();
            assert!((got - expect).abs() < 1e-14, "D={dist}: {got} vs {expect}");
        }
    }

    #[test]
    fn orientation_reversal_is_maximally_far_under_linear_gamma() {
        // same segment traversed both ways: barycenters coincide, cosines are
        // -1, so d² = 1 + 1 - 2·(-1) = 4
        let k = gaussian_linear(1.0);
        let s1 = segment([0.0, 0.0], [1.0, 0.0]);
        let s2 = segment([1.0, 0.0], [0.0, 0.0]);
        let got = varifold_dist_sq(&s1, &s2, &k).unwrap();
        assert!((got - 4.0).abs() < 1e-14);
        // the even spherical Gaussian profile cannot see the reversal as
        // strongly: it stays strictly below the odd-profile separation
        let keven = VarifoldKernel {
            spatial: SpatialProfile::Gaussian { sigma: 1.0 },
            spherical: SphericalProfile::SphereGaussian { sigma: 1.0 },
        };
        let ge = varifold_dist_sq(&s1, &s2, &keven).unwrap();
        assert!(ge < got);
    }

    #[test]
    fn self_distance_is_exactly_zero() {
        let k = gaussian_linear(0.7);
        for (_, s) in fixtures::curve_corpus() {
            assert_eq!(varifold_dist_sq(&s, &s, &k).unwrap(), 0.0);
        }
        for (_, s) in fixtures::surface_corpus() {
            assert_eq!(varifold_dist_sq(&s, &s, &k).unwrap(), 0.0);
        }
    }

    #[test]
    fn inner_product_is_symmetric() {
        let k = gaussian_linear(0.8);
        let a = fixtures::circle(16, 1.0, (0.0, 0.0));
        let b = fixtures::ellipse(20, 1.2, 0.6);
        let ab = varifold_inner(&a, &b, &k).unwrap();
        let ba = varifold_inner(&b, &a, &k).unwrap();
        assert!((ab - ba).abs() <= 1e-14 * ab.abs().max(1.0));
    }

    #[test]
    fn splitting_a_straight_segment_changes_norm_only_through_barycenters() {
        // one unit segment vs the same segment split in half: with a linear
        // spherical profile all cosines are 1, so
        //   ⟨μ,μ⟩_split = 1/4·(2·ρ(0) + 2·ρ(1/4))
        // and the defect against the unsplit norm ρ(0) = 1 is
        //   1/2·(1 - ρ(1/4)).
        let k = gaussian_linear(1.0);
        let one = segment([0.0, 0.0], [1.0, 0.0]);
        let two = one.subdivide().unwrap();
        let n1 = varifold_inner(&one, &one, &k).unwrap();
        let n2 = varifold_inner(&two, &two, &k).unwrap();
        let rho_quarter = (-0.25f64).exp();
        assert!((n1 - 1.0).abs() < 1e-15);
        assert!((n2 - 0.5 * (1.0 + rho_quarter)).abs() < 1e-15);
    }

    #[test]
    fn rejects_kind_and_dimension_mismatch() {
        let k = VarifoldKernel::default();
        let c = fixtures::circle(8, 1.0, (0.0, 0.0));
        let s = fixtures::sphere(1, 1.0, (0.0, 0.0, 0.0));
        assert!(matches!(
            varifold_inner(&c, &s, &k),
            Err(Error::KindMismatch(..))
        ));
        let c3 = SimplicialShape::curve(
            3,
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0, 1],
            false,
        )
        .unwrap();
        assert!(matches!(
            varifold_inner(&c, &c3, &k),
            Err(Error::DimensionMismatch(2, 3))
        ));
    }

    fn fd_grad(
        s1: &SimplicialShape,
        s2: &SimplicialShape,
        k: &VarifoldKernel,
        h: f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; s1.vertices().len()];
        for i in 0..g.len() {
            let mut vp = s1.vertices().to_vec();
            let mut vm = s1.vertices().to_vec();
            vp[i] += h;
            vm[i] -= h;
            let fp = varifold_dist_sq(&s1.with_vertices(vp).unwrap(), s2, k).unwrap();
            let fm = varifold_dist_sq(&s1.with_vertices(vm).unwrap(), s2, k).unwrap();
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    #[test]
    fn curve_gradient_matches_finite_differences() {
        for kernel in [
            gaussian_linear(0.6),
            VarifoldKernel {
                spatial: SpatialProfile::Cauchy { sigma: 0.8 },
                spherical: SphericalProfile::SphereGaussian { sigma: 1.1 },
            },
        ] {
            let s1 = fixtures::random_smooth_curve(7, 3);
            let s2 = fixtures::ellipse(9, 1.1, 0.7);
            let g = varifold_grad(&s1, &s2, &kernel).unwrap();
            let gf = fd_grad(&s1, &s2, &kernel, 1e-6);
            let num = crate::linalg::norm(
                &g.iter().zip(&gf).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            let den = crate::linalg::norm(&gf).max(1e-12);
            assert!(num / den < 1e-7, "rel err {}", num / den);
        }
    }

    #[test]
    fn surface_gradient_matches_finite_differences() {
        let kernel = VarifoldKernel {
            spatial: SpatialProfile::Gaussian { sigma: 0.9 },
            spherical: SphericalProfile::SphereGaussian { sigma: 1.4 },
        };
        let s1 = fixtures::sphere(0, 1.0, (0.0, 0.0, 0.0));
        let s2 = fixtures::sphere(0, 0.8, (0.3, 0.1, -0.2));
        let g = varifold_grad(&s1, &s2, &kernel).unwrap();
        let gf = fd_grad(&s1, &s2, &kernel, 1e-6);
        let num =
            crate::linalg::norm(&g.iter().zip(&gf).map(|(a, b)| a - b).collect::<Vec<_>>());
        let den = crate::linalg::norm(&gf).max(1e-12);
        assert!(num / den < 1e-7, "rel err {}", num / den);
    }

    #[test]
    fn gradient_at_coincidence_is_negligible() {
        let k = gaussian_linear(0.7);
        let s = fixtures::circle(12, 1.0, (0.0, 0.0));
        let g = varifold_grad(&s, &s, &k).unwrap();
        assert!(crate::linalg::norm_inf(&g) < 1e-10);
    }
}
