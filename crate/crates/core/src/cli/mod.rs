//! Command-line front end: one subcommand per experiment kind.
//!
//! Every command reads a TOML [`ExperimentConfig`], writes its outputs into one
//! directory and finishes with a [`RunManifest`]. Failures print a JSON record on
//! stderr (and into `error.json` when the output directory exists) and map to exit
//! codes 2 (config), 3 (numerical abort) and 4 (certification failure).

pub mod config;
pub mod manifest;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::diagnostics::{
    convergence_experiment, stability_experiment, write_convergence_csv, write_modulated_energy_csv,
    write_stability_csv,
};
use crate::error::{Error, Result};
use crate::kernels::{build_regularized_kernel, Certification};
use crate::meanfield::{solve_with, FieldCache, NormMonitors};
use crate::output::write_csv;
use crate::particles::io::{save_state, write_trajectory_csv};
use crate::particles::{integrate, separation_lower_bound};

pub use config::{ExperimentConfig, ExperimentKind};
pub use manifest::{RunManifest, MANIFEST_FILE};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "SFLOW_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sflow", version, about = "Weighted singular Coulomb flows: particles, mean field and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the particle system.
    Simulate(RunArgs),
    /// Solve the mollified mean-field equation on a grid.
    SolvePde(RunArgs),
    /// H^-1 distance between two solutions and its fitted growth rate.
    Stability(RunArgs),
    /// Particle-to-continuum convergence study over N and seeds.
    Convergence(RunArgs),
    /// Build and certify the regularized kernel.
    VerifyKernel(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `run.output_dir`.
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "K")]
    pub threads: Option<usize>,
    /// Replace every seed in the config.
    #[arg(long, value_name = "U64")]
    pub seed_override: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

impl Command {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Command::Simulate(_) => ExperimentKind::Simulate,
            Command::SolvePde(_) => ExperimentKind::SolvePde,
            Command::Stability(_) => ExperimentKind::Stability,
            Command::Convergence(_) => ExperimentKind::Convergence,
            Command::VerifyKernel(_) => ExperimentKind::VerifyKernel,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::SolvePde(a)
            | Command::Stability(a)
            | Command::Convergence(a)
            | Command::VerifyKernel(a) => a,
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let args = cli.command.args().clone();
    let mut out_dir = None;
    let result = prepare(&cli.command, &args).and_then(|(config, out)| {
        out_dir = Some(out.clone());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        pool.install(|| execute(&config, &out, args.quiet))
    });
    match result {
        Ok(()) => 0,
        Err(err) => {
            let record = json!({
                "error": err.kind(),
                "message": err.to_string(),
                "exit_code": err.exit_code(),
            });
            eprintln!("{record}");
            if let Some(dir) = out_dir.filter(|d| d.is_dir()) {
                let _ = fs::write(dir.join("error.json"), format!("{record}\n"));
            }
            err.exit_code()
        }
    }
}

fn prepare(command: &Command, args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    if args.threads == Some(0) {
        return Err(Error::Config {
            path: "--threads".into(),
            message: "must be at least 1".into(),
        });
    }
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.kind != command.kind() {
        return Err(Error::Config {
            path: "kind".into(),
            message: format!("config is for `{}`, not `{}`", config.kind.name(), command.kind().name()),
        });
    }
    if let Some(seed) = args.seed_override {
        config.override_seed(seed);
        config.validate()?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((config, out))
}

/// Runs one experiment into `out` and writes its manifest.
pub fn execute(config: &ExperimentConfig, out: &Path, quiet: bool) -> Result<()> {
    let started = manifest::now();
    fs::create_dir_all(out)?;
    let _ = fs::remove_file(out.join("error.json"));
    let log = |msg: &str| {
        if !quiet {
            eprintln!("[sflow] {msg}");
        }
    };
    log(&format!("{} -> {}", config.kind.name(), out.display()));
    let mut files = Vec::new();
    let outcome = match config.kind {
        ExperimentKind::Simulate => simulate(config, out, &mut files, &log),
        ExperimentKind::SolvePde => solve_pde(config, out, &mut files, &log),
        ExperimentKind::Stability => stability(config, out, &mut files, &log),
        ExperimentKind::Convergence => convergence(config, out, &mut files, &log),
        ExperimentKind::VerifyKernel => verify_kernel(config, out, &mut files, &log),
    };
    // a certification failure still leaves a complete, checksummed report behind
    if outcome.is_ok() || matches!(outcome, Err(Error::Certification(_))) {
        fs::write(out.join("config.toml"), config.to_toml())?;
        files.insert(0, PathBuf::from("config.toml"));
        let mut m = RunManifest::new(config.kind.name(), config.hash(), started);
        m.record(out, &files)?;
        m.finish(out)?;
        log("done");
    }
    outcome
}

fn create(out: &Path, rel: &str, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    files.push(PathBuf::from(rel));
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T, files: &mut Vec<PathBuf>) -> Result<()> {
    use std::io::Write;
    let mut w = create(out, rel, files)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    snapshots: usize,
    interaction_energy_initial: f64,
    source_sup_norm: f64,
    /// Lower bound on the separation over `[0, T]` implied by the energy envelope.
    separation_bound: f64,
    min_separation: f64,
    separation_bound_holds: bool,
    max_mean_weight_drift: f64,
}

fn simulate(config: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>, log: &dyn Fn(&str)) -> Result<()> {
    let kernels = config.kernels()?;
    let state0 = config.initial_particles()?;
    let integrator = config.integrator_config()?;
    log(&format!("N = {}, T = {}", state0.n(), integrator.t_final));
    let record = integrate(&state0, &integrator, &kernels)?;
    write_trajectory_csv(&record, create(out, "trajectory.csv", files)?)?;
    for (k, state) in record.states.iter().enumerate() {
        let rel = format!("states/state_{k:04}.sflw");
        let path = out.join(&rel);
        fs::create_dir_all(path.parent().unwrap())?;
        save_state(state, &path)?;
        files.push(PathBuf::from(rel));
    }
    let h0 = record.monitors.first().map(|m| m.interaction_energy).unwrap_or(0.0);
    let s = kernels.source.sup_norm();
    let bound = if state0.n() > 1 && h0 > 0.0 {
        separation_lower_bound(h0, s, integrator.t_final, kernels.coulomb.exponent())
    } else {
        0.0
    };
    let min_sep = record.monitors.iter().map(|m| m.min_separation).fold(f64::INFINITY, f64::min);
    let summary = SimulationSummary {
        snapshots: record.states.len(),
        interaction_energy_initial: h0,
        source_sup_norm: s,
        separation_bound: bound,
        min_separation: min_sep,
        separation_bound_holds: min_sep >= bound,
        max_mean_weight_drift: record.monitors.iter().map(|m| (m.mean_weight - 1.0).abs()).fold(0.0, f64::max),
    };
    write_json(out, "summary.json", &summary, files)
}

pub const MONITOR_HEADER: [&str; 8] = ["t", "mass", "l1", "l2", "linf", "w12", "w14", "support_radius"];

pub fn monitor_row(m: &NormMonitors) -> Vec<f64> {
    vec![m.t, m.mass, m.l1, m.l2, m.linf, m.w12, m.w14, m.support_radius]
}

fn field_cache(config: &ExperimentConfig) -> Result<FieldCache> {
    let spec = config.grid_spec()?;
    let pde = config.pde_config()?;
    let kernels = config.kernels()?;
    FieldCache::new(spec, &kernels.coulomb, &kernels.source, pde.eps_moll(spec.h()))
}

fn solve_pde(config: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>, log: &dyn Fn(&str)) -> Result<()> {
    let mu0 = config.initial_density()?;
    let pde = config.pde_config()?;
    let cache = field_cache(config)?;
    let kernels = config.kernels()?;
    log(&format!("n = {}, T = {}", mu0.spec().n, pde.t_final));
    fs::create_dir_all(out.join("snapshots"))?;
    let mut k = 0;
    let mut snapshots = Vec::new();
    let run = solve_with(&mu0, &pde, &cache, &kernels.coupling, false, |mu, _| {
        let rel = format!("snapshots/density_{k:04}.sfgd");
        mu.save(&out.join(&rel))?;
        snapshots.push(PathBuf::from(rel));
        k += 1;
        Ok(())
    })?;
    let rows: Vec<Vec<f64>> = run.monitors.iter().map(monitor_row).collect();
    write_csv(create(out, "monitors.csv", files)?, &MONITOR_HEADER, &rows)?;
    files.extend(snapshots);
    log(&format!("{} steps, clipped mass {:e}", run.steps.len(), run.total_clipped_mass()));
    Ok(())
}

fn stability(config: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>, log: &dyn Fn(&str)) -> Result<()> {
    let mu1 = config.initial_density()?;
    let mu2 = config.perturbed_density()?;
    let pde = config.pde_config()?;
    let cache = field_cache(config)?;
    let kernels = config.kernels()?;
    let report = stability_experiment(&mu1, &mu2, &pde, &cache, &kernels.coupling)?;
    write_stability_csv(&report, create(out, "stability.csv", files)?)?;
    if let Some(fit) = &report.fit {
        log(&format!("rate {:.6} (halves {:.6}, {:.6})", fit.rate, fit.first_half, fit.second_half));
    }
    write_json(
        out,
        "stability.json",
        &json!({ "fit": report.fit, "envelope_ratio": report.envelope_ratio }),
        files,
    )
}

fn convergence(config: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>, log: &dyn Fn(&str)) -> Result<()> {
    let conv = config.convergence.as_ref().expect("validated");
    let mu0 = config.initial_density()?;
    let pde = config.pde_config()?;
    let cache = field_cache(config)?;
    let kernels = config.kernels()?;
    log(&format!("N = {:?}, {} seeds", conv.particle_counts, conv.seeds.len()));
    let report = convergence_experiment(&mu0, &pde, &cache, &kernels, conv)?;
    write_convergence_csv(&report, create(out, "convergence.csv", files)?)?;
    for cell in &report.cells {
        let rel = format!("cells/N{}_seed{}/modulated_energy.csv", cell.n, cell.seed);
        write_modulated_energy_csv(&cell.energies, create(out, &rel, files)?)?;
    }
    if let Some(s) = &report.slopes {
        log(&format!("slopes: sup E {:.3}, W1 {:.3}, E0 {:.3}", s.sup_energy, s.w1, s.initial_energy));
    }
    write_json(
        out,
        "slopes.json",
        &json!({ "summary": report.summary, "slopes": report.slopes }),
        files,
    )
}

#[derive(Serialize)]
struct CertificationReport {
    reports: Vec<Certification>,
    /// `‖V_ε‖_∞` grows as `ε` shrinks.
    sup_norm_increasing: bool,
    passed: bool,
}

fn verify_kernel(config: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>, log: &dyn Fn(&str)) -> Result<()> {
    let reg = config.kernel.regularization.as_ref().expect("validated");
    let coulomb = config.coulomb()?;
    let mut reports = Vec::new();
    for &eps in &reg.epsilon {
        let (_, cert) =
            build_regularized_kernel(&coulomb, config.regularization_params(eps), reg.samples, reg.seed, reg.max_retries)?;
        log(&format!(
            "epsilon {eps}: domination {} fft {} sup {:.6}",
            cert.domination_pass, cert.fft_pass, cert.sup_norm
        ));
        reports.push(cert);
    }
    let mut by_eps: Vec<&Certification> = reports.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let sup_norm_increasing = by_eps.windows(2).all(|w| w[1].sup_norm > w[0].sup_norm);
    let passed = sup_norm_increasing && reports.iter().all(|c| c.passed());
    let failed: Vec<String> =
        reports.iter().filter(|c| !c.passed()).map(|c| format!("epsilon {}", c.epsilon)).collect();
    write_json(
        out,
        "certification.json",
        &CertificationReport {
            reports,
            sup_norm_increasing,
            passed,
        },
        files,
    )?;
    if passed {
        Ok(())
    } else if failed.is_empty() {
        Err(Error::Certification("sup norm does not increase as epsilon decreases".into()))
    } else {
        Err(Error::Certification(format!("failed at {}", failed.join(", "))))
    }
}
