//! Metric matching of discrete curves and surfaces.
//!
//! The crate implements three registration models between simplicial shapes
//! (polylines in R^2/R^3, triangle meshes in R^3):
//!
//! * an intrinsic second-order Sobolev metric on parametrized curves,
//!   relaxed over tensor-product B-spline paths;
//! * an outer deformation metric induced by a Gaussian landmark flow
//!   (vertices advected by a reproducing-kernel velocity field);
//! * a hybrid metric adding an intrinsic first-order stiffness term on top
//!   of the outer kernel cost.
//!
//! All three are solved as finite-dimensional optimal-control problems:
//! time discretization first, exact gradients of the discretized objective
//! (finite differences only appear in tests), L-BFGS with a strong Wolfe
//! line search. The endpoint fidelity is an oriented-varifold distance,
//! which requires no point correspondence between source and target.

pub mod config;
pub mod error;
pub mod fixtures;
pub mod hybrid;
pub mod intrinsic;
pub mod io;
pub mod kernels;
pub mod lddmm;
pub mod linalg;
pub mod ocontrol;
pub mod optim;
pub mod selftest;
pub mod shapes;
pub mod spline;
pub mod varifold;

pub use error::{Error, Result};
pub use shapes::{cell_features, CellFeatures, ShapeKind, SimplicialShape};
