//! End-to-end tests of the `geomatch` binary: exit codes, printed values,
//! run-directory contents, reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geomatch::fixtures;
use geomatch::io::write_curve_string;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_geomatch"));
    // keep runs deterministic and cheap regardless of the host
    c.env("GEOMATCH_THREADS", "1");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

/// Value printed after `key=` on its own stdout line.
fn printed_value(out: &Output, key: &str) -> f64 {
    let text = stdout_of(out);
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no '{key}=' line in:\n{text}"));
    line.split('=').nth(1).unwrap().parse().unwrap()
}

/// The committed fixture shapes are exactly what the library generators
/// produce. Regenerate with `GEOMATCH_REGEN_FIXTURES=1 cargo test -p
/// geomatch-cli bundled`.
#[test]
fn bundled_curve_fixtures_match_the_generators() {
    let expected = [
        (
            "parallel_a.curve",
            write_curve_string(
                &geomatch::SimplicialShape::polyline(2, vec![0.0, 0.0, 1.0, 0.0], false).unwrap(),
            ),
        ),
        (
            "parallel_b.curve",
            write_curve_string(
                &geomatch::SimplicialShape::polyline(2, vec![0.0, 1.0, 1.0, 1.0], false).unwrap(),
            ),
        ),
        ("circle32.curve", write_curve_string(&fixtures::circle(32, 1.0, (0.0, 0.0)))),
        ("ellipse32.curve", write_curve_string(&fixtures::ellipse(32, 1.2, 0.8))),
        ("peanut32.curve", write_curve_string(&fixtures::peanut(32, 0.8))),
    ];
    let regen = std::env::var("GEOMATCH_REGEN_FIXTURES").is_ok();
    for (name, text) in expected {
        let path = fixture(name);
        if regen {
            fs::write(&path, &text).unwrap();
        }
        let committed = fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e} (regenerate with GEOMATCH_REGEN_FIXTURES=1)", name));
        assert_eq!(committed, text, "{name} differs from its generator");
    }
}

#[test]
fn dist_of_identical_files_is_zero() {
    let out = bin()
        .args(["dist"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("circle32.curve"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("dist_sq=0\n"), "{}", stdout_of(&out));
}

#[test]
fn dist_of_the_parallel_segments_matches_the_closed_form() {
    let out = bin()
        .args(["dist", "--sigma", "1"])
        .arg(fixture("parallel_a.curve"))
        .arg(fixture("parallel_b.curve"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    let d2 = printed_value(&out, "dist_sq");
    let expected = 2.0 - 2.0 * (-1.0f64).exp();
    assert!((d2 - expected).abs() < 1e-9, "{d2} vs {expected}");
    let d = printed_value(&out, "dist");
    assert!((d - expected.sqrt()).abs() < 1e-9);
    // 12 significant digits
    assert!(stdout_of(&out).contains("dist_sq=1.26424111766\n"), "{}", stdout_of(&out));
}

#[test]
fn dist_missing_file_exits_2() {
    let out = bin()
        .args(["dist", "/nonexistent/shape.curve"])
        .arg(fixture("circle32.curve"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2, "{}", stderr_of(&out));
}

#[test]
fn dist_kind_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let tri = dir.path().join("tri.obj");
    fs::write(&tri, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    let out = bin()
        .args(["dist"])
        .arg(fixture("circle32.curve"))
        .arg(&tri)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3, "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("mismatch"), "{}", stderr_of(&out));
}

#[test]
fn bad_thread_env_exits_2() {
    let out = bin()
        .env("GEOMATCH_THREADS", "many")
        .args(["dist"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("circle32.curve"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_of(&out).contains("GEOMATCH_THREADS"));
}

fn read_report(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn matching_a_shape_to_itself_is_immediate() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("circle32.curve"))
        .args(["--model", "lddmm", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    let report = read_report(&run);
    assert!(report["energy"].as_f64().unwrap() <= 1e-8);
    assert!(report["iterations"].as_u64().unwrap() <= 5);
    for k in 0..5 {
        assert!(run.join(format!("frame_{k}.curve")).exists(), "frame_{k}.curve");
        assert!(run.join(format!("frame_{k}.svg")).exists(), "frame_{k}.svg");
    }
    assert!(run.join("energy.csv").exists());
    assert!(!run.join("FAILED").exists());
}

#[test]
fn bundled_config_match_reduces_fidelity_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("ellipse32.curve"))
        .args(["--config"])
        .arg(fixture("configs/lddmm.json"))
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    let report = read_report(&first);
    let fidelity = report["fidelity"].as_f64().unwrap();
    let initial = report["initial_fidelity"].as_f64().unwrap();
    assert!(
        fidelity <= 0.05 * initial,
        "fidelity {fidelity} not reduced 95% from {initial}"
    );

    // the echoed effective config reproduces the energy log byte for byte
    let second = dir.path().join("second");
    let out2 = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("ellipse32.curve"))
        .args(["--config"])
        .arg(first.join("config.json"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out2), 0, "{}", stderr_of(&out2));
    let csv1 = fs::read(first.join("energy.csv")).unwrap();
    let csv2 = fs::read(second.join("energy.csv")).unwrap();
    assert_eq!(csv1, csv2, "energy.csv differs between identical runs");
}

#[test]
fn malformed_config_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"model": "lddmm", "lamda": 5}"#).unwrap();
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("ellipse32.curve"))
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2, "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("lamda"), "{}", stderr_of(&out));
}

#[test]
fn solver_failure_exits_4_and_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    // an unreachable fit tolerance makes the spline fit fail
    fs::write(
        &cfg,
        r#"{"model": "intrinsic", "discretization": {"fit_tol": 1e-13}}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("ellipse32.curve"))
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 4, "{}", stderr_of(&out));
    let marker = fs::read_to_string(run.join("FAILED")).unwrap();
    assert!(marker.contains("fit residual"), "{marker}");
}

#[test]
fn match_kind_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let tri = dir.path().join("tri.obj");
    fs::write(&tri, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(&tri)
        .args(["--model", "lddmm", "--out"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3, "{}", stderr_of(&out));
}

#[test]
fn svg_frames_hold_the_polyline_coordinates_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("ellipse32.curve"))
        .args(["--model", "lddmm", "--max-iters", "30", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    for k in [0usize, 4] {
        let shape = geomatch::io::load_shape(&run.join(format!("frame_{k}.curve"))).unwrap();
        let svg = fs::read_to_string(run.join(format!("frame_{k}.svg"))).unwrap();
        for p in shape.vertices().chunks_exact(2) {
            let needle = format!("{} {}", p[0], p[1]);
            assert!(svg.contains(&needle), "frame_{k}.svg misses '{needle}'");
        }
    }
}

#[test]
fn hybrid_run_logs_the_energy_split() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = bin()
        .args(["match"])
        .arg(fixture("circle32.curve"))
        .arg(fixture("peanut32.curve"))
        .args(["--config"])
        .arg(fixture("configs/hybrid_neck.json"))
        .args(["--max-iters", "40", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr_of(&out));
    let csv = fs::read_to_string(run.join("energy.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "iter,energy,fidelity,total,outer_energy,intrinsic_energy");
    // outer + intrinsic = energy on every row
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[4] + v[5] - v[1]).abs() <= 1e-10 * (1.0 + v[1].abs()), "{line}");
    }
}

#[test]
fn selftest_passes_and_is_deterministic() {
    let a = bin().arg("selftest").output().unwrap();
    let b = bin().arg("selftest").output().unwrap();
    assert_eq!(exit_code(&a), 0, "{}", stderr_of(&a));
    assert_eq!(a.stdout, b.stdout, "self test reports differ between runs");
    let text = stdout_of(&a);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}
