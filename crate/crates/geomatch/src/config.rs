//! Run configuration and reporting types shared by the matching solvers and
//! the command-line front end.
//!
//! Configs are strict: unknown keys are rejected at parse time so typos
//! cannot silently fall back to defaults. Every field has a default except
//! the model choice, and the full effective config is echoed into the run
//! report so results can be reproduced exactly.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::IntrinsicStiffness;
use crate::intrinsic::SobolevCoeffs;
use crate::kernels::{SpatialProfile, SphericalProfile};
use crate::optim::OptimOptions;
use crate::shapes::SimplicialShape;
use crate::varifold::VarifoldKernel;

/// Which Riemannian model drives the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Intrinsic,
    Lddmm,
    Hybrid,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Intrinsic => "intrinsic",
            Model::Lddmm => "lddmm",
            Model::Hybrid => "hybrid",
        }
    }
}

/// Optimize over time-discretized controls or over the initial momentum of
/// the Hamiltonian flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    Trajectory,
    Shooting,
}

impl SolverMode {
    pub fn name(self) -> &'static str {
        match self {
            SolverMode::Trajectory => "trajectory",
            SolverMode::Shooting => "shooting",
        }
    }
}

/// Varifold fidelity kernel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarifoldConfig {
    pub spatial: SpatialProfile,
    pub spherical: SphericalProfile,
}

impl Default for VarifoldConfig {
    fn default() -> Self {
        let k = VarifoldKernel::default();
        VarifoldConfig {
            spatial: k.spatial,
            spherical: k.spherical,
        }
    }
}

impl VarifoldConfig {
    pub fn kernel(&self) -> VarifoldKernel {
        VarifoldKernel {
            spatial: self.spatial,
            spherical: self.spherical,
        }
    }
}

/// Deformation (flow) kernel width; `None` scales with the source shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DeformationConfig {
    pub sigma: Option<f64>,
}

/// Grid sizes: time steps for the flow solvers, spline layout and
/// quadrature for the intrinsic solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretization {
    /// Control intervals in trajectory mode.
    pub time_steps: usize,
    /// RK4 steps in shooting mode.
    pub integration_steps: usize,
    /// Spline control points along t and θ.
    pub ctrl_t: usize,
    pub ctrl_theta: usize,
    /// Spline orders (degree + 1) along t and θ.
    pub order_t: usize,
    pub order_theta: usize,
    /// Gauss–Legendre points per knot interval.
    pub quad_t: usize,
    pub quad_theta: usize,
    /// Sample count for the endpoint curve; default 2 × ctrl_theta.
    pub eval_points: Option<usize>,
    /// Tolerated RMS residual of the source-curve spline fit.
    pub fit_tol: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            time_steps: 10,
            integration_steps: 50,
            ctrl_t: 10,
            ctrl_theta: 40,
            order_t: 3,
            order_theta: 4,
            quad_t: 3,
            quad_theta: 5,
            eval_points: None,
            fit_tol: 1e-3,
        }
    }
}

impl Discretization {
    pub fn resolved_eval_points(&self) -> usize {
        self.eval_points.unwrap_or(2 * self.ctrl_theta)
    }
}

/// Optimizer knobs exposed to run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let o = OptimOptions::default();
        OptimConfig {
            memory: o.memory,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
        }
    }
}

impl OptimConfig {
    pub fn to_options(self) -> OptimOptions {
        OptimOptions {
            memory: self.memory,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..OptimOptions::default()
        }
    }
}

/// Output directory and frame sampling times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub frame_times: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("geomatch_out"),
            frame_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// Full configuration of one matching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    pub model: Model,
    #[serde(default)]
    pub solver: SolverMode,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub varifold: VarifoldConfig,
    #[serde(default)]
    pub deformation: DeformationConfig,
    #[serde(default)]
    pub sobolev: SobolevCoeffs,
    #[serde(default)]
    pub stiffness: IntrinsicStiffness,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_lambda() -> f64 {
    100.0
}

impl MatchConfig {
    /// A config with every field at its default for the given model.
    pub fn for_model(model: Model) -> Self {
        MatchConfig {
            model,
            solver: SolverMode::default(),
            lambda: default_lambda(),
            varifold: VarifoldConfig::default(),
            deformation: DeformationConfig::default(),
            sobolev: SobolevCoeffs::default(),
            stiffness: IntrinsicStiffness::default(),
            discretization: Discretization::default(),
            optim: OptimConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Strict JSON parse; unknown keys are reported by name.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: MatchConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        if !(self.varifold.spatial.sigma() > 0.0) {
            return Err(Error::InvalidConfig(
                "varifold spatial sigma must be positive".into(),
            ));
        }
        if let SphericalProfile::SphereGaussian { sigma } = self.varifold.spherical {
            if !(sigma > 0.0) {
                return Err(Error::InvalidConfig(
                    "varifold spherical sigma must be positive".into(),
                ));
            }
        }
        if let Some(s) = self.deformation.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(
                    "deformation sigma must be positive".into(),
                ));
            }
        }
        self.sobolev.validate()?;
        self.stiffness.validate()?;
        let d = &self.discretization;
        if d.time_steps < 1 || d.integration_steps < 1 {
            return Err(Error::InvalidConfig("time step counts must be >= 1".into()));
        }
        if d.order_t < 2 {
            return Err(Error::InvalidConfig("order_t must be >= 2".into()));
        }
        if d.order_theta < 3 {
            return Err(Error::InvalidConfig("order_theta must be >= 3".into()));
        }
        if d.ctrl_t < d.order_t || d.ctrl_theta < d.order_theta {
            return Err(Error::InvalidConfig(
                "control point counts must be >= the spline order".into(),
            ));
        }
        if d.quad_t < 1 || d.quad_theta < 1 {
            return Err(Error::InvalidConfig("quadrature orders must be >= 1".into()));
        }
        if d.resolved_eval_points() < 3 {
            return Err(Error::InvalidConfig("eval_points must be >= 3".into()));
        }
        if !(d.fit_tol > 0.0) {
            return Err(Error::InvalidConfig("fit_tol must be positive".into()));
        }
        if self.optim.memory < 1 || self.optim.max_iters < 1 || !(self.optim.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("invalid optimizer options".into()));
        }
        for &t in &self.output.frame_times {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(format!(
                    "frame time {t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Deformation kernel width: explicit value, or a fraction of the
    /// source bounding-box diagonal (half for the plain flow model, a
    /// quarter for the hybrid model, which favors smaller kernels).
    pub fn resolve_sigma(&self, q0: &SimplicialShape) -> f64 {
        if let Some(s) = self.deformation.sigma {
            return s;
        }
        let diag = q0.bbox_diagonal();
        let factor = match self.model {
            Model::Hybrid => 0.25,
            _ => 0.5,
        };
        let s = factor * diag;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// One row of the optimizer energy log (`energy.csv`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub iter: usize,
    /// Path/deformation energy at this iterate.
    pub energy: f64,
    /// Unweighted squared varifold distance to the target.
    pub fidelity: f64,
    /// Objective value energy + λ·fidelity.
    pub total: f64,
    /// Kernel part of the hybrid energy (hybrid runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_energy: Option<f64>,
    /// Weighted intrinsic part of the hybrid energy (hybrid runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsic_energy: Option<f64>,
}

impl EnergyRow {
    /// `energy.csv` header; the split columns appear when the rows carry
    /// the hybrid energy decomposition.
    pub fn csv_header(with_split: bool) -> &'static str {
        if with_split {
            "iter,energy,fidelity,total,outer_energy,intrinsic_energy"
        } else {
            "iter,energy,fidelity,total"
        }
    }

    /// One CSV line; full shortest-round-trip float formatting so reruns
    /// are byte-identical.
    pub fn csv_line(&self, with_split: bool) -> String {
        if with_split {
            format!(
                "{},{},{},{},{},{}",
                self.iter,
                self.energy,
                self.fidelity,
                self.total,
                self.outer_energy.unwrap_or(0.0),
                self.intrinsic_energy.unwrap_or(0.0)
            )
        } else {
            format!("{},{},{},{}", self.iter, self.energy, self.fidelity, self.total)
        }
    }
}

/// Render a full `energy.csv` body (header plus one line per iterate).
pub fn energy_csv(rows: &[EnergyRow], with_split: bool) -> String {
    let mut out = String::from(EnergyRow::csv_header(with_split));
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line(with_split));
        out.push('\n');
    }
    out
}

/// Final summary of a matching run, serialized to `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub model: String,
    pub solver: String,
    pub energy: f64,
    pub fidelity: f64,
    pub total: f64,
    pub initial_fidelity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsic_energy: Option<f64>,
    /// RMS residual of the source spline fit (intrinsic runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<f64>,
    /// Deformation kernel width actually used (flow models only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_sigma: Option<f64>,
    pub iterations: usize,
    pub status: String,
    pub warnings: Vec<String>,
    /// Wall-clock time of the solve; informational, not reproducible.
    pub timing_seconds: f64,
    pub config: MatchConfig,
}
