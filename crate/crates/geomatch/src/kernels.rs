//! Kernel families.
//!
//! Three kinds of kernels appear in the toolkit:
//!
//! * spatial profiles ρ acting on squared distances between cell
//!   barycenters (Gaussian, Cauchy);
//! * spherical profiles γ acting on cosines between unit orientations
//!   (linear, spherical Gaussian);
//! * the matrix-valued deformation kernel K(x, y) = exp(-|x-y|²/σ²)·Id
//!   driving the landmark flows.
//!
//! All derivatives needed by the gradient code are provided analytically.

use serde::{Deserialize, Serialize};

/// Spatial kernel profile ρ, evaluated on squared distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialProfile {
    /// ρ(r²) = exp(-r²/σ²)
    Gaussian { sigma: f64 },
    /// ρ(r²) = 1 / (1 + r²/σ²)
    Cauchy { sigma: f64 },
}

impl SpatialProfile {
    pub fn sigma(&self) -> f64 {
        match *self {
            SpatialProfile::Gaussian { sigma } | SpatialProfile::Cauchy { sigma } => sigma,
        }
    }

    /// ρ(r²)
    pub fn eval(&self, r2: f64) -> f64 {
        match *self {
            SpatialProfile::Gaussian { sigma } => (-r2 / (sigma * sigma)).exp(),
            SpatialProfile::Cauchy { sigma } => 1.0 / (1.0 + r2 / (sigma * sigma)),
        }
    }

    /// dρ/d(r²)
    pub fn deriv(&self, r2: f64) -> f64 {
        match *self {
            SpatialProfile::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                -(-r2 / s2).exp() / s2
            }
            SpatialProfile::Cauchy { sigma } => {
                let s2 = sigma * sigma;
                let u = 1.0 + r2 / s2;
                -1.0 / (s2 * u * u)
            }
        }
    }
}

/// Spherical kernel profile γ, evaluated on cosines u = ⟨t, t'⟩ ∈ [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SphericalProfile {
    /// γ(u) = u. Odd, so the fidelity distinguishes orientation reversal.
    Linear,
    /// γ(u) = exp((2/σ²)(u - 1)): the Gaussian kernel restricted to the unit
    /// sphere, since |t - t'|² = 2 - 2⟨t, t'⟩. The exponent is negative for
    /// u < 1, which keeps the profile positive definite and bounded by
    /// γ(1) = 1.
    SphereGaussian { sigma: f64 },
}

impl SphericalProfile {
    /// γ(u), with u clamped to [-1, 1] to absorb round-off in upstream dot
    /// products.
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        match *self {
            SphericalProfile::Linear => u,
            SphericalProfile::SphereGaussian { sigma } => {
                ((2.0 / (sigma * sigma)) * (u - 1.0)).exp()
            }
        }
    }

    /// dγ/du at the clamped argument.
    pub fn deriv(&self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        match *self {
            SphericalProfile::Linear => 1.0,
            SphericalProfile::SphereGaussian { sigma } => {
                let a = 2.0 / (sigma * sigma);
                a * (a * (u - 1.0)).exp()
            }
        }
    }

    /// Whether γ is an odd function of its argument (needed for the fidelity
    /// to separate a curve from its orientation reversal).
    pub fn is_odd(&self) -> bool {
        matches!(self, SphericalProfile::Linear)
    }
}

/// Scalar Gaussian deformation kernel k(x, y) = exp(-|x-y|²/σ²); the
/// matrix-valued kernel is k·Id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationKernel {
    pub sigma: f64,
}

impl DeformationKernel {
    pub fn new(sigma: f64) -> Self {
        assert!(sigma > 0.0, "kernel width must be positive");
        DeformationKernel { sigma }
    }

    /// k as a function of the squared distance.
    pub fn scalar(&self, r2: f64) -> f64 {
        (-r2 / (self.sigma * self.sigma)).exp()
    }

    /// dk/d(r²)
    pub fn scalar_deriv(&self, r2: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        -(-r2 / s2).exp() / s2
    }

    /// d²k/d(r²)²
    pub fn scalar_deriv2(&self, r2: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (-r2 / s2).exp() / (s2 * s2)
    }

    /// The full d x d kernel matrix K(x, y) = k(|x-y|²)·Id, row-major.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = x.len();
        assert_eq!(d, y.len());
        let k = self.scalar(crate::linalg::dist2(x, y));
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = k;
        }
        m
    }

    /// Derivative of K(x, y) with respect to x: a rank-3 array with layout
    /// `out[(i*d + j)*d + c] = ∂K_ij/∂x_c = -2 (x_c - y_c)/σ² · k · δ_ij`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = x.len();
        assert_eq!(d, y.len());
        let kp = self.scalar_deriv(crate::linalg::dist2(x, y));
        let mut out = vec![0.0; d * d * d];
        for i in 0..d {
            for c in 0..d {
                out[(i * d + i) * d + c] = kp * 2.0 * (x[c] - y[c]);
            }
        }
        out
    }
}
