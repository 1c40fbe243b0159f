//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A simplex has (near-)zero measure: a collapsed segment or a triangle
    /// with collinear vertices.
    #[error("degenerate simplex {index}: measure {measure:.3e} below threshold")]
    DegenerateSimplex { index: usize, measure: f64 },

    /// Shape construction failed validation (bad index, repeated vertex,
    /// inconsistent orientation, unsupported dimension, ...).
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// The matrix passed as a rotation is not orthogonal with determinant +1.
    #[error("not a rotation matrix: {0}")]
    NotARotation(String),

    /// A shape file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    /// The file extension (or explicit format) is not one of the supported
    /// shape formats.
    #[error("unsupported shape format: {0}")]
    UnsupportedFormat(String),

    /// Two shapes live in different ambient dimensions.
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    /// Curve compared against surface (or vice versa).
    #[error("kind mismatch: {0} vs {1}")]
    KindMismatch(String, String),

    /// Time integration produced a non-finite state.
    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    /// A spline derivative of order higher than the polynomial degree was
    /// requested, or the spline order is too low for the metric.
    #[error("derivative order too high: {0}")]
    OrderTooHigh(String),

    /// The spline path fails the immersion condition |∂_θ c| > 0 at a
    /// quadrature node.
    #[error("path not immersed at t={t:.4}, theta={theta:.4}: |∂_θ c| = {speed:.3e}")]
    NotImmersed { t: f64, theta: f64, speed: f64 },

    /// The least-squares spline fit of an input curve left a residual above
    /// the configured tolerance.
    #[error("spline fit residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    FitError { residual: f64, tol: f64 },

    /// The objective evaluated to NaN/inf at the initial point.
    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,

    /// Bad configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
