//! Stability and mean-field convergence experiments with their CSV writers.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::kernels::{CouplingMatrix, KernelSet};
use crate::meanfield::{solve, solve_with, FieldCache, PdeConfig, PdeRun};
use crate::output::{fmt_f64, write_csv};
use crate::particles::{integrate_with, sample_from_density, IntegratorConfig, WeightMode};
use crate::special::{linear_fit, median};

use super::energy::{modulated_energy_with, ModulatedEnergyBreakdown};
use super::ot::{w1_to_quantized, QuantizedDensity, W1Estimate, COST_GUARD};
use super::potential::{ContinuumPotential, PotentialOperator, QuadratureRule};
use super::spectral::hminus1_norm_sq;

/// Time matching tolerance between particle and grid output times.
const TIME_MATCH: f64 = 1e-9;

/// Exponential envelope of a positive time series `E(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Smallest `Ĉ` with `E(t) <= e^{Ĉ t} E(0)` at every sample.
    pub rate: f64,
    /// Same envelope over `(0, T/2]`.
    pub first_half: f64,
    /// Envelope over `(T/2, T]` measured from the last sample at or before `T/2`.
    pub second_half: f64,
    /// `|Ĉ₂ - Ĉ₁| / max(|Ĉ₁|, |Ĉ₂|)`; zero when both rates vanish.
    pub drift: f64,
}

fn envelope_rate(times: &[f64], values: &[f64], from: usize, to: usize) -> f64 {
    let (t0, e0) = (times[from], values[from]);
    (from + 1..=to)
        .map(|k| (values[k] / e0).ln() / (times[k] - t0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Fits the envelope rate and the rates of both halves. Needs at least three
/// samples with one strictly inside each half and a positive first value.
pub fn fit_rates(times: &[f64], values: &[f64]) -> Result<RateFit> {
    let last = times.len().saturating_sub(1);
    if times.len() != values.len() || last < 2 {
        return Err(Error::invalid("series", "need at least three samples"));
    }
    if !(values[0] > 0.0) || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("series", "rates need a positive series"));
    }
    let half = times[0] + 0.5 * (times[last] - times[0]);
    let mid = times.iter().rposition(|t| *t <= half + TIME_MATCH).unwrap_or(0).clamp(1, last - 1);
    let rate = envelope_rate(times, values, 0, last);
    let first_half = envelope_rate(times, values, 0, mid);
    let second_half = envelope_rate(times, values, mid, last);
    let scale = first_half.abs().max(second_half.abs());
    Ok(RateFit {
        rate,
        first_half,
        second_half,
        drift: if scale > 0.0 { (second_half - first_half).abs() / scale } else { 0.0 },
    })
}

/// `E(t) = ‖μ¹(t) - μ²(t)‖²_{Ḣ^{-1}}` along two solves.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// `None` when `E(0) = 0`.
    pub fit: Option<RateFit>,
    /// `max_t E(t) / (e^{Ĉ t} E(0))`; at most 1 by construction of the fit.
    pub envelope_ratio: Option<f64>,
}

/// Runs both solves on the same output times and compares them.
pub fn stability_experiment(
    mu1: &GridDensity,
    mu2: &GridDensity,
    config: &PdeConfig,
    cache: &FieldCache,
    coupling: &CouplingMatrix,
) -> Result<StabilityReport> {
    if (mu1.mass() - mu2.mass()).abs() > super::spectral::MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            lhs: mu1.mass(),
            rhs: mu2.mass(),
        });
    }
    let first = solve(mu1, config, cache, coupling)?;
    let mut times = Vec::with_capacity(first.snapshots.len());
    let mut energy = Vec::with_capacity(first.snapshots.len());
    let mut k = 0;
    solve_with(mu2, config, cache, coupling, false, |mu, _| {
        let other = &first.snapshots[k];
        if (other.time() - mu.time()).abs() > TIME_MATCH {
            return Err(Error::Numerical(format!(
                "output times diverged: {} vs {}",
                other.time(),
                mu.time()
            )));
        }
        times.push(mu.time());
        energy.push(hminus1_norm_sq(other, mu, cache.kernel())?);
        k += 1;
        Ok(())
    })?;
    stability_report(times, energy)
}

/// Builds the report from a precomputed series.
pub fn stability_report(times: Vec<f64>, energy: Vec<f64>) -> Result<StabilityReport> {
    if energy.first().is_some_and(|e| *e > 0.0) {
        let fit = fit_rates(&times, &energy)?;
        let e0 = energy[0];
        let ratio = times
            .iter()
            .zip(&energy)
            .map(|(t, e)| e / (e0 * (fit.rate * (t - times[0])).exp()))
            .fold(0.0, f64::max);
        Ok(StabilityReport {
            times,
            energy,
            fit: Some(fit),
            envelope_ratio: Some(ratio),
        })
    } else {
        Ok(StabilityReport {
            times,
            energy,
            fit: None,
            envelope_ratio: None,
        })
    }
}

pub fn write_stability_csv<W: Write>(report: &StabilityReport, out: W) -> Result<()> {
    let rate = report.fit.map_or(0.0, |f| f.rate);
    let rows: Vec<Vec<f64>> = report.times.iter().zip(&report.energy).map(|(t, e)| vec![*t, *e, rate]).collect();
    write_csv(out, &["t", "E", "fitted_rate"], &rows)
}

pub fn write_modulated_energy_csv<W: Write>(energies: &[ModulatedEnergyBreakdown], out: W) -> Result<()> {
    let rows: Vec<Vec<f64>> = energies
        .iter()
        .map(|e| vec![e.t, e.self_term, e.cross_term, e.continuum_term, e.total])
        .collect();
    write_csv(out, &["t", "self", "cross", "continuum", "total"], &rows)
}

/// Parameters of the particle side of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub particle_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub weight_mode: WeightMode,
    /// RKF45 absolute and relative tolerance.
    pub tolerance: f64,
    #[serde(default = "default_floor")]
    pub separation_floor: f64,
    /// Atom budget for the `W_1` quantization of `μ(T)`.
    pub quantization: usize,
    #[serde(default)]
    pub quadrature: QuadratureRule,
}

fn default_floor() -> f64 {
    IntegratorConfig::DEFAULT_SEPARATION_FLOOR
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particle_counts.is_empty() {
            return Err(Error::invalid("convergence.particle_counts", "must not be empty"));
        }
        if self.particle_counts.windows(2).any(|w| w[0] >= w[1]) || self.particle_counts[0] < 2 {
            return Err(Error::invalid(
                "convergence.particle_counts",
                "must be strictly increasing and start at 2 or more",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("convergence.seeds", "must not be empty"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("convergence.tolerance", "must be positive"));
        }
        let largest = *self.particle_counts.last().unwrap();
        if self.quantization == 0 || largest.saturating_mul(self.quantization) > COST_GUARD {
            return Err(Error::invalid(
                "convergence.quantization",
                format!("must be positive with N * quantization <= {COST_GUARD}"),
            ));
        }
        Ok(())
    }
}

/// One `(N, seed)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCell {
    pub n: usize,
    pub seed: u64,
    pub energies: Vec<ModulatedEnergyBreakdown>,
    /// `sup_t |𝓔_N(t)|` over the output times.
    pub sup_energy: f64,
    /// `𝓔_N(0)`.
    pub initial_energy: f64,
    pub w1_final: W1Estimate,
    /// Whether every weight stayed exactly 1.
    pub weights_constant: bool,
    pub wall_clock: f64,
}

/// Medians over seeds for one `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub n: usize,
    pub median_sup_energy: f64,
    pub median_initial_energy: f64,
    pub median_w1: f64,
}

/// Log-log slopes of the per-`N` medians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSlopes {
    pub sup_energy: f64,
    /// Of `|𝓔_N(0)|`.
    pub initial_energy: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub cells: Vec<ConvergenceCell>,
    pub summary: Vec<ConvergenceSummary>,
    /// `None` with a single particle count.
    pub slopes: Option<ConvergenceSlopes>,
}

impl ConvergenceReport {
    fn from_cells(cells: Vec<ConvergenceCell>, counts: &[usize]) -> Self {
        let summary: Vec<ConvergenceSummary> = counts
            .iter()
            .map(|&n| {
                let of = |f: &dyn Fn(&ConvergenceCell) -> f64| {
                    median(&cells.iter().filter(|c| c.n == n).map(f).collect::<Vec<_>>())
                };
                ConvergenceSummary {
                    n,
                    median_sup_energy: of(&|c| c.sup_energy),
                    median_initial_energy: of(&|c| c.initial_energy.abs()),
                    median_w1: of(&|c| c.w1_final.distance),
                }
            })
            .collect();
        let slopes = (summary.len() >= 2).then(|| {
            let x: Vec<f64> = summary.iter().map(|s| (s.n as f64).ln()).collect();
            let fit = |f: &dyn Fn(&ConvergenceSummary) -> f64| {
                linear_fit(&x, &summary.iter().map(|s| f(s).ln()).collect::<Vec<_>>()).0
            };
            ConvergenceSlopes {
                sup_energy: fit(&|s| s.median_sup_energy),
                initial_energy: fit(&|s| s.median_initial_energy),
                w1: fit(&|s| s.median_w1),
            }
        });
        Self { cells, summary, slopes }
    }
}

/// Solves the PDE from `μ₀` and runs the particle cells against it.
pub fn convergence_experiment(
    mu0: &GridDensity,
    pde: &PdeConfig,
    cache: &FieldCache,
    kernels: &KernelSet,
    config: &ConvergenceConfig,
) -> Result<ConvergenceReport> {
    config.validate()?;
    let run = solve(mu0, pde, cache, &kernels.coupling)?;
    convergence_from_run(&run, pde, kernels, config)
}

/// Particle cells against an existing PDE run (snapshots at every output time).
pub fn convergence_from_run(
    run: &PdeRun,
    pde: &PdeConfig,
    kernels: &KernelSet,
    config: &ConvergenceConfig,
) -> Result<ConvergenceReport> {
    config.validate()?;
    let first = run
        .snapshots
        .first()
        .ok_or_else(|| Error::invalid("pde run", "no snapshots were kept"))?;
    let last = run.snapshots.last().unwrap();
    let spec = *first.spec();
    let operator = PotentialOperator::new(spec, &kernels.coulomb, config.quadrature)?;
    let potentials: Vec<ContinuumPotential> = run
        .snapshots
        .iter()
        .map(|mu| ContinuumPotential::new(mu, &operator))
        .collect::<Result<_>>()?;
    drop(operator);
    let atoms = QuantizedDensity::new(last, config.quantization)?;
    let mut integrator = IntegratorConfig::rkf45(last.time(), config.tolerance).with_record_interval(pde.output_interval);
    integrator.separation_floor = config.separation_floor;

    let jobs: Vec<(usize, u64)> = config
        .particle_counts
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let cells: Vec<ConvergenceCell> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let clock = Instant::now();
            let state0 = sample_from_density(first, n, seed, config.weight_mode)?;
            let mut energies = Vec::with_capacity(potentials.len());
            let record = integrate_with(&state0, &integrator, kernels, |state| {
                let potential = potentials
                    .iter()
                    .find(|p| (p.time() - state.t()).abs() < TIME_MATCH)
                    .ok_or_else(|| Error::Numerical(format!("no density snapshot at t = {}", state.t())))?;
                energies.push(modulated_energy_with(state, potential, &kernels.coulomb)?);
                Ok(())
            })?;
            let final_state = record.last().expect("the initial state is always recorded");
            let w1_final = w1_to_quantized(final_state, &atoms, spec.half_width)?;
            let weights_constant = record.states.iter().all(|s| s.weights().iter().all(|m| *m == 1.0));
            Ok(ConvergenceCell {
                n,
                seed,
                sup_energy: energies.iter().map(|e| e.total.abs()).fold(0.0, f64::max),
                initial_energy: energies[0].total,
                energies,
                w1_final,
                weights_constant,
                wall_clock: clock.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport::from_cells(cells, &config.particle_counts))
}

/// `convergence.csv`: one row per cell and a footer record holding the slopes.
/// Wall-clock times are left out so the file is reproducible byte for byte.
pub fn write_convergence_csv<W: Write>(report: &ConvergenceReport, mut out: W) -> Result<()> {
    writeln!(out, "N,seed,sup_E,W1_final,W1_uncertainty,E0")?;
    for c in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.n,
            c.seed,
            fmt_f64(c.sup_energy),
            fmt_f64(c.w1_final.distance),
            fmt_f64(c.w1_final.uncertainty),
            fmt_f64(c.initial_energy)
        )?;
    }
    if let Some(s) = report.slopes {
        writeln!(
            out,
            "slope,,{},{},,{}",
            fmt_f64(s.sup_energy),
            fmt_f64(s.w1),
            fmt_f64(s.initial_energy)
        )?;
    }
    Ok(())
}
