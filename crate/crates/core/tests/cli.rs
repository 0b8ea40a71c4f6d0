use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sflow::cli::{RunManifest, MANIFEST_FILE};

const TWO_BODY: &str = r#"
kind = "simulate"

[kernel]
dim = 3
convention = "raw"
coupling = { kind = "identity" }
source = { family = "zero" }

[particles]
seed = 0
separation_floor = 1e-6
weight_bound = 1.0
initial = { kind = "explicit", positions = [[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]], weights = [1.0, 1.0] }
integrator = { method = "rkf45", abs_tol = 1e-10, rel_tol = 1e-10 }

[run]
t_final = 1.0
output_interval = 0.25
"#;

const GRID: &str = r#"
[kernel]
dim = 3
convention = "newtonian"
coupling = { kind = "identity" }
source = { family = "zero" }

[grid]
half_width = 2.0
n = 32
eps_moll_factor = 4.0
cfl = 0.4
splitting = "strang"
initial = { radius = 0.6, center = [0.0, 0.0, 0.0] }

[run]
t_final = 0.1
output_interval = 0.05
"#;

const KERNEL: &str = r#"
kind = "verify-kernel"

[kernel]
dim = 3
convention = "raw"
coupling = { kind = "identity" }
source = { family = "zero" }
regularization = { epsilon = [0.25], lambda = 0.5, c = 4.0 }

[run]
t_final = 1.0
"#;

fn sflow(config: &str, dir: &Path, sub: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.in.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sflow"))
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(extra)
        .env_remove(sflow::cli::OUT_DIR_ENV)
        .output()
        .unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn two_body_simulation_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflow(TWO_BODY, dir.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let t = column(&csv, "t");
    assert_eq!(t.len(), 5);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!(dir.path().join("out/states/state_0004.sflw").exists());

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.command, "simulate");
    assert_eq!(manifest.config_hash.len(), 64);
    for f in &manifest.files {
        let path = dir.path().join("out").join(&f.path);
        assert_eq!(sflow::cli::manifest::sha256_file(&path).unwrap(), f.sha256, "{}", f.path);
    }
    assert!(manifest.files.iter().any(|f| f.path == "trajectory.csv"));
}

#[test]
fn negative_weight_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = TWO_BODY.replace("weights = [1.0, 1.0]", "weights = [2.5, -0.5]");
    let out = sflow(&config, dir.path(), "simulate", &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(record["error"], "config");
    assert!(record["message"].as_str().unwrap().contains("particles.initial.weights[1]"), "{stderr}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = TWO_BODY.replace(
        "initial = { kind = \"explicit\", positions = [[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]], weights = [1.0, 1.0] }",
        "initial = { kind = \"sample\", n = 24, weight_mode = \"uniform\" }",
    ) + &GRID[GRID.find("[grid]").unwrap()..GRID.find("[run]").unwrap()];
    let config = config.replace("source = { family = \"zero\" }", "source = { family = \"gaussian-dipole\", amplitude = 1.0, direction = [1.0, 0.0, 0.0] }");
    for dir in [&a, &b] {
        let out = sflow(&config, dir.path(), "simulate", &["--threads", "1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for rel in ["trajectory.csv", "summary.json", "states/state_0002.sflw", "config.toml"] {
        let x = fs::read(a.path().join("out").join(rel)).unwrap();
        let y = fs::read(b.path().join("out").join(rel)).unwrap();
        assert_eq!(x, y, "{rel}");
    }
    // a different seed gives a different sample
    let c = tempfile::tempdir().unwrap();
    let out = sflow(&config, c.path(), "simulate", &["--seed-override", "7"]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(
        fs::read(a.path().join("out/trajectory.csv")).unwrap(),
        fs::read(c.path().join("out/trajectory.csv")).unwrap()
    );
}

#[test]
fn pde_without_source_keeps_sup_norm_and_mass() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("kind = \"solve-pde\"\n{GRID}");
    let out = sflow(&config, dir.path(), "solve-pde", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/monitors.csv")).unwrap();
    let linf = column(&csv, "linf");
    assert_eq!(linf.len(), 3);
    assert!(linf.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{linf:?}");
    assert!(column(&csv, "mass").iter().all(|m| (m - 1.0).abs() < 1e-6));
    let snap = sflow::grid::GridDensity::load(&dir.path().join("out/snapshots/density_0002.sfgd")).unwrap();
    assert!((snap.time() - 0.1).abs() < 1e-12);
}

#[test]
fn box_too_small_asks_to_enlarge() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("kind = \"solve-pde\"\n{GRID}").replace("half_width = 2.0", "half_width = 0.7");
    let out = sflow(&config, dir.path(), "solve-pde", &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("enlarge box"));
    assert!(dir.path().join("out/error.json").exists());
}

#[test]
fn convergence_smoke_run_emits_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        "kind = \"convergence\"\n{GRID}\n[convergence]\nparticle_counts = [16, 32]\nseeds = [0, 1]\ntolerance = 1e-6\nquantization = 200\n"
    );
    let out = sflow(&config, dir.path(), "convergence", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().last().unwrap().starts_with("slope,"));
    assert!(dir.path().join("out/cells/N32_seed1/modulated_energy.csv").exists());
    let slopes: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/slopes.json")).unwrap()).unwrap();
    assert!(slopes["slopes"]["w1"].as_f64().unwrap().is_finite());

    let empty = config.replace("seeds = [0, 1]", "seeds = []");
    let out = sflow(&empty, dir.path(), "convergence", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("convergence.seeds"));
}

#[test]
fn stability_writes_a_rate() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("kind = \"stability\"\n{GRID}\n[stability]\nperturbed = {{ radius = 0.6, center = [0.1, 0.0, 0.0] }}\n");
    let out = sflow(&config, dir.path(), "stability", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/stability.csv")).unwrap();
    assert_eq!(column(&csv, "E").len(), 3);
    assert!(column(&csv, "E")[0] > 0.0);
}

#[test]
fn kernel_certification_passes_and_dumps_a_decreasing_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflow(KERNEL, dir.path(), "verify-kernel", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/certification.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let ladder: Vec<f64> = report["reports"][0]["ladder"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(ladder.windows(2).all(|w| w[1] < w[0]));

    let broken = KERNEL.replace("c = 4.0", "c = 0.0");
    let out = sflow(&broken, dir.path(), "verify-kernel", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel.regularization.c"));
}

#[test]
fn output_directory_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, TWO_BODY).unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_sflow"))
        .args(["simulate", "--quiet", "--config"])
        .arg(&path)
        .env(sflow::cli::OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("trajectory.csv").exists());
}

#[test]
fn subcommand_must_match_the_config_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = sflow(TWO_BODY, dir.path(), "solve-pde", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));
}
