//! `geomatch` — varifold distances and shape matching from the shell.
//!
//! Exit codes: 0 success, 1 failed self test, 2 unreadable input or bad
//! configuration, 3 shape kind/dimension mismatch, 4 solver failure.

mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geomatch::config::{energy_csv, MatchConfig, Model, SolverMode};
use geomatch::hybrid::StiffnessVariant;
use geomatch::io::{load_shape, save_shape};
use geomatch::kernels::{SpatialProfile, SphericalProfile};
use geomatch::varifold::{varifold_dist_sq, VarifoldKernel};
use geomatch::{Error, ShapeKind, SimplicialShape};

const EXIT_SELFTEST: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_MISMATCH: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(
    name = "geomatch",
    version,
    about = "Metric matching of discrete curves and surfaces",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the squared varifold distance between two shape files
    Dist(DistArgs),
    /// Match a source shape onto a target and write a run directory
    Match(MatchArgs),
    /// Run the built-in invariant checks and report pass/fail per check
    Selftest,
}

#[derive(Args)]
struct DistArgs {
    /// First shape (.curve or .obj)
    shape_a: PathBuf,
    /// Second shape (.curve or .obj)
    shape_b: PathBuf,
    /// Spatial kernel family
    #[arg(long, value_enum, default_value_t = SpatialArg::Gaussian)]
    spatial: SpatialArg,
    /// Spatial kernel width
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Orientation kernel family
    #[arg(long, value_enum, default_value_t = SphericalArg::Linear)]
    spherical: SphericalArg,
    /// Orientation kernel width (gaussian family only)
    #[arg(long, default_value_t = 1.0)]
    spherical_sigma: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SpatialArg {
    Gaussian,
    Cauchy,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SphericalArg {
    Linear,
    Gaussian,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Intrinsic,
    Lddmm,
    Hybrid,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Trajectory,
    Shooting,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Full,
    Tangential,
}

#[derive(Args)]
struct MatchArgs {
    /// Source shape, flowed onto the target
    source: PathBuf,
    /// Target shape
    target: PathBuf,
    /// JSON run configuration; flags below override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matching model (required unless the config file sets it)
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Optimal-control formulation
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Fidelity penalty weight
    #[arg(long)]
    lambda: Option<f64>,
    /// Deformation kernel width (flow models)
    #[arg(long)]
    sigma: Option<f64>,
    /// Stiffness weight (hybrid model)
    #[arg(long)]
    weight: Option<f64>,
    /// Stiffness variant (hybrid model, curves)
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Optimizer iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
    /// Time steps of the flow discretization
    #[arg(long)]
    time_steps: Option<usize>,
    /// Output directory for frames, energy.csv and report.json
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_thread_pool() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_INPUT);
    }
    let outcome = match cli.command {
        Command::Dist(args) => cmd_dist(&args),
        Command::Match(args) => cmd_match(&args),
        Command::Selftest => cmd_selftest(),
    };
    match outcome {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

/// Honor `GEOMATCH_THREADS` (0 or unset = automatic).
fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("GEOMATCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("GEOMATCH_THREADS must be a nonnegative integer, got '{raw}'"))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("failed to build thread pool: {e}"))
}

type CmdResult = Result<ExitCode, (u8, String)>;

/// Format with 12 significant digits, plain decimal notation.
fn sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}

fn load_input(path: &Path) -> Result<SimplicialShape, (u8, String)> {
    load_shape(path).map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn cmd_dist(args: &DistArgs) -> CmdResult {
    let a = load_input(&args.shape_a)?;
    let b = load_input(&args.shape_b)?;
    if !(args.sigma > 0.0) {
        return Err((EXIT_INPUT, "--sigma must be positive".into()));
    }
    let kernel = VarifoldKernel {
        spatial: match args.spatial {
            SpatialArg::Gaussian => SpatialProfile::Gaussian { sigma: args.sigma },
            SpatialArg::Cauchy => SpatialProfile::Cauchy { sigma: args.sigma },
        },
        spherical: match args.spherical {
            SphericalArg::Linear => SphericalProfile::Linear,
            SphericalArg::Gaussian => {
                if !(args.spherical_sigma > 0.0) {
                    return Err((EXIT_INPUT, "--spherical-sigma must be positive".into()));
                }
                SphericalProfile::SphereGaussian {
                    sigma: args.spherical_sigma,
                }
            }
        },
    };
    let d2 = varifold_dist_sq(&a, &b, &kernel).map_err(|e| match e {
        Error::KindMismatch(..) | Error::DimensionMismatch(..) => (EXIT_MISMATCH, e.to_string()),
        other => (EXIT_SOLVER, other.to_string()),
    })?;
    println!("dist_sq={}", sig12(d2));
    println!("dist={}", sig12(d2.sqrt()));
    Ok(ExitCode::SUCCESS)
}

fn build_config(args: &MatchArgs) -> Result<MatchConfig, (u8, String)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))?;
            MatchConfig::from_json(&text)
                .map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))?
        }
        None => {
            let Some(model) = args.model else {
                return Err((
                    EXIT_INPUT,
                    "either --config or --model is required".into(),
                ));
            };
            MatchConfig::for_model(match model {
                ModelArg::Intrinsic => Model::Intrinsic,
                ModelArg::Lddmm => Model::Lddmm,
                ModelArg::Hybrid => Model::Hybrid,
            })
        }
    };
    if let Some(model) = args.model {
        cfg.model = match model {
            ModelArg::Intrinsic => Model::Intrinsic,
            ModelArg::Lddmm => Model::Lddmm,
            ModelArg::Hybrid => Model::Hybrid,
        };
    }
    if let Some(solver) = args.solver {
        cfg.solver = match solver {
            SolverArg::Trajectory => SolverMode::Trajectory,
            SolverArg::Shooting => SolverMode::Shooting,
        };
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    if let Some(sigma) = args.sigma {
        cfg.deformation.sigma = Some(sigma);
    }
    if let Some(weight) = args.weight {
        cfg.stiffness.weight = weight;
    }
    if let Some(variant) = args.variant {
        cfg.stiffness.variant = match variant {
            VariantArg::Full => StiffnessVariant::Full,
            VariantArg::Tangential => StiffnessVariant::Tangential,
        };
    }
    if let Some(iters) = args.max_iters {
        cfg.optim.max_iters = iters;
    }
    if let Some(steps) = args.time_steps {
        cfg.discretization.time_steps = steps;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate().map_err(|e| (EXIT_INPUT, e.to_string()))?;
    Ok(cfg)
}

/// Everything a matching run leaves on disk, regardless of the model.
struct RunOutputs {
    frames: Vec<(f64, SimplicialShape)>,
    energy_log: Vec<geomatch::config::EnergyRow>,
    report: geomatch::config::MatchReport,
    split_energy: bool,
}

fn cmd_match(args: &MatchArgs) -> CmdResult {
    let cfg = build_config(args)?;
    let source = load_input(&args.source)?;
    let target = load_input(&args.target)?;
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| (EXIT_INPUT, format!("{}: {e}", dir.display())))?;

    let solved = match cfg.model {
        Model::Intrinsic => geomatch::intrinsic::match_intrinsic(&source, &target, &cfg).map(|r| {
            RunOutputs {
                frames: r.frames,
                energy_log: r.energy_log,
                report: r.report,
                split_energy: false,
            }
        }),
        Model::Lddmm => geomatch::lddmm::match_lddmm(&source, &target, &cfg).map(|r| RunOutputs {
            frames: r.frames,
            energy_log: r.energy_log,
            report: r.report,
            split_energy: false,
        }),
        Model::Hybrid => geomatch::hybrid::match_hybrid(&source, &target, &cfg).map(|r| {
            RunOutputs {
                frames: r.frames,
                energy_log: r.energy_log,
                report: r.report,
                split_energy: true,
            }
        }),
    };

    let outputs = match solved {
        Ok(outputs) => outputs,
        Err(e) => {
            let msg = e.to_string();
            let _ = std::fs::write(dir.join("FAILED"), format!("{msg}\n"));
            let code = match e {
                Error::KindMismatch(..) | Error::DimensionMismatch(..) => EXIT_MISMATCH,
                Error::InvalidConfig(_) => EXIT_INPUT,
                _ => EXIT_SOLVER,
            };
            return Err((code, msg));
        }
    };

    write_run_dir(&dir, &outputs).map_err(|e| (EXIT_INPUT, e))?;
    println!("model={} solver={}", outputs.report.model, outputs.report.solver);
    println!("energy={}", sig12(outputs.report.energy));
    println!("fidelity={}", sig12(outputs.report.fidelity));
    println!("total={}", sig12(outputs.report.total));
    println!("iterations={}", outputs.report.iterations);
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn write_run_dir(dir: &Path, outputs: &RunOutputs) -> Result<(), String> {
    let fail = |path: &Path, e: &dyn std::fmt::Display| format!("{}: {e}", path.display());
    for (k, (_, shape)) in outputs.frames.iter().enumerate() {
        let ext = match shape.kind() {
            ShapeKind::Curve => "curve",
            ShapeKind::Surface => "obj",
        };
        let path = dir.join(format!("frame_{k}.{ext}"));
        save_shape(shape, &path).map_err(|e| fail(&path, &e))?;
        if shape.kind() == ShapeKind::Curve && shape.dim() == 2 {
            let path = dir.join(format!("frame_{k}.svg"));
            std::fs::write(&path, svg::curve_svg(shape)).map_err(|e| fail(&path, &e))?;
        }
    }
    let csv_path = dir.join("energy.csv");
    std::fs::write(
        &csv_path,
        energy_csv(&outputs.energy_log, outputs.split_energy),
    )
    .map_err(|e| fail(&csv_path, &e))?;

    let report_path = dir.join("report.json");
    let report_json = serde_json::to_string_pretty(&outputs.report)
        .map_err(|e| fail(&report_path, &e))?;
    std::fs::write(&report_path, report_json + "\n").map_err(|e| fail(&report_path, &e))?;

    // the effective config alone, accepted directly by --config for
    // byte-identical reruns
    let config_path = dir.join("config.json");
    let config_json = serde_json::to_string_pretty(&outputs.report.config)
        .map_err(|e| fail(&config_path, &e))?;
    std::fs::write(&config_path, config_json + "\n").map_err(|e| fail(&config_path, &e))?;
    Ok(())
}

fn cmd_selftest() -> CmdResult {
    let mut stdout = std::io::stdout().lock();
    match geomatch::selftest::run_all(&mut stdout) {
        Ok(true) => Ok(ExitCode::SUCCESS),
        Ok(false) => Ok(ExitCode::from(EXIT_SELFTEST)),
        Err(e) => Err((EXIT_INPUT, e.to_string())),
    }
}
