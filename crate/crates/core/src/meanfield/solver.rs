use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::kernels::CouplingMatrix;
use crate::output::output_times;

use super::cache::{FieldCache, Fields};
use super::monitors::{norm_monitors, NormMonitors};
use super::transport::ssp_rk2_step;

/// Operator splitting between the source and transport substeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    Lie,
    #[default]
    Strang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    /// Mollification width in grid spacings.
    #[serde(default = "PdeConfig::default_eps_factor")]
    pub eps_moll_factor: f64,
    #[serde(default = "PdeConfig::default_cfl")]
    pub cfl: f64,
    pub t_final: f64,
    /// Time between recorded outputs.
    pub output_interval: f64,
    #[serde(default)]
    pub splitting: Splitting,
}

/// Guard-shell values above this fraction of the maximum abort the run.
pub const GUARD_TOLERANCE: f64 = 1e-12;

impl PdeConfig {
    pub const DEFAULT_EPS_FACTOR: f64 = 4.0;
    pub const DEFAULT_CFL: f64 = 0.4;

    fn default_eps_factor() -> f64 {
        Self::DEFAULT_EPS_FACTOR
    }

    fn default_cfl() -> f64 {
        Self::DEFAULT_CFL
    }

    pub fn new(t_final: f64, output_interval: f64) -> Self {
        Self {
            eps_moll_factor: Self::DEFAULT_EPS_FACTOR,
            cfl: Self::DEFAULT_CFL,
            t_final,
            output_interval,
            splitting: Splitting::Strang,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_moll_factor >= 2.0) || !self.eps_moll_factor.is_finite() {
            return Err(Error::invalid(
                "grid.eps_moll_factor",
                format!("mollifier must span at least 2 cells, got {}", self.eps_moll_factor),
            ));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::invalid("grid.cfl", format!("must lie in (0, 1), got {}", self.cfl)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::invalid("run.t_final", "must be nonnegative and finite"));
        }
        if !(self.output_interval > 0.0) {
            return Err(Error::invalid("run.output_interval", "must be positive"));
        }
        Ok(())
    }

    pub fn eps_moll(&self, h: f64) -> f64 {
        self.eps_moll_factor * h
    }
}

/// Bookkeeping of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    /// `dt Σ_a max|u_a| / h` at the start of the step.
    pub courant: f64,
    /// Mass removed by clipping negative values.
    pub clipped_mass: f64,
    /// Relative mass correction applied by the renormalization.
    pub mass_correction: f64,
}

fn source_substep(values: &mut [f64], rate: &[f64], tau: f64) {
    for (m, s) in values.iter_mut().zip(rate) {
        if *m != 0.0 {
            *m *= (s * tau).exp();
        }
    }
}

/// Advances `mu` by exactly `dt`, subdividing into substeps that respect the CFL
/// and source-stability limits. Returns the new density and one report per substep.
pub fn pde_step(
    mu: &GridDensity,
    dt: f64,
    config: &PdeConfig,
    cache: &FieldCache,
    coupling: &CouplingMatrix,
) -> Result<(GridDensity, Vec<StepReport>)> {
    let mut values = mu.values().to_vec();
    let mut t = mu.time();
    let t_end = t + dt;
    let mut reports = Vec::new();
    let mut fields = Fields::compute(cache, &values, coupling)?;
    while t < t_end {
        let report = substep(&mut values, &fields, t, t_end - t, config, cache, coupling)?;
        t = if report.dt >= t_end - t { t_end } else { t + report.dt };
        reports.push(report);
        if t < t_end {
            fields = Fields::compute(cache, &values, coupling)?;
        }
    }
    Ok((GridDensity::from_parts(*mu.spec(), values, t), reports))
}

/// Largest stable step for the given fields.
pub fn stable_dt(fields: &Fields, config: &PdeConfig, h: f64) -> f64 {
    let speed = fields.speed_sum();
    let rate = fields.source_rate_sup();
    let mut dt = f64::INFINITY;
    if speed > 0.0 {
        dt = dt.min(config.cfl * h / speed);
    }
    if rate > 0.0 {
        dt = dt.min(config.cfl / rate);
    }
    dt
}

fn substep(
    values: &mut Vec<f64>,
    fields: &Fields,
    t: f64,
    remaining: f64,
    config: &PdeConfig,
    cache: &FieldCache,
    coupling: &CouplingMatrix,
) -> Result<StepReport> {
    let spec = *cache.spec();
    let h = spec.h();
    let dt = stable_dt(fields, config, h).min(remaining);
    if !(dt > 0.0) || dt < 1e-14 * t.abs().max(1.0) {
        return Err(Error::StepUnderflow { t, dt });
    }
    let with_source = cache.has_source();
    let first_tau = match config.splitting {
        Splitting::Strang => 0.5 * dt,
        Splitting::Lie => dt,
    };
    let mut first_velocity = None;
    if with_source {
        source_substep(values, &fields.source_rate, first_tau);
    } else {
        first_velocity = Some(fields.velocity.clone());
    }
    let mut transported = ssp_rk2_step(&spec, values, dt, |m| match first_velocity.take() {
        Some(u) => Ok(u),
        None => Ok(Fields::compute(cache, m, coupling)?.velocity),
    })?;
    if with_source && config.splitting == Splitting::Strang {
        let rate = cache.source_rate(&transported);
        source_substep(&mut transported, &rate, 0.5 * dt);
    }

    let dv = spec.cell_volume();
    let mut clipped = 0.0;
    for v in transported.iter_mut() {
        if *v < 0.0 {
            clipped -= *v;
            *v = 0.0;
        }
    }
    let mass: f64 = transported.iter().sum::<f64>() * dv;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::Numerical(format!("density mass became {mass} at t = {t}")));
    }
    transported.iter_mut().for_each(|v| *v /= mass);
    let density = GridDensity::from_parts(spec, transported, t + dt);
    if density.guard_shell_max() > GUARD_TOLERANCE * density.max() {
        return Err(Error::EnlargeBox { t: t + dt });
    }
    *values = density.into_values();
    Ok(StepReport {
        t: t + dt,
        dt,
        courant: dt * fields.speed_sum() / h,
        clipped_mass: clipped * dv,
        mass_correction: 1.0 / mass - 1.0,
    })
}

/// Output of a full solve.
#[derive(Debug, Clone, Default)]
pub struct PdeRun {
    /// Densities at `t0` and at every output time.
    pub snapshots: Vec<GridDensity>,
    pub monitors: Vec<NormMonitors>,
    pub steps: Vec<StepReport>,
}

impl PdeRun {
    pub fn total_clipped_mass(&self) -> f64 {
        self.steps.iter().map(|s| s.clipped_mass).sum()
    }

    pub fn last(&self) -> Option<&GridDensity> {
        self.snapshots.last()
    }
}

/// Solves to `t_final`, calling `observe` on the initial density and at each output
/// time. Snapshots are kept only when `keep_snapshots` is set.
pub fn solve_with<F>(
    mu0: &GridDensity,
    config: &PdeConfig,
    cache: &FieldCache,
    coupling: &CouplingMatrix,
    keep_snapshots: bool,
    mut observe: F,
) -> Result<PdeRun>
where
    F: FnMut(&GridDensity, &NormMonitors) -> Result<()>,
{
    config.validate()?;
    mu0.validate()?;
    if mu0.spec() != cache.spec() {
        return Err(Error::invalid("grid", "density and field cache use different grids"));
    }
    let mut run = PdeRun::default();
    let mu = mu0.clone();
    let record = |mu: &GridDensity, run: &mut PdeRun, observe: &mut F| -> Result<()> {
        let m = norm_monitors(mu);
        observe(mu, &m)?;
        run.monitors.push(m);
        if keep_snapshots {
            run.snapshots.push(mu.clone());
        }
        Ok(())
    };
    record(&mu, &mut run, &mut observe)?;
    let mut fields = Fields::compute(cache, mu.values(), coupling)?;
    let mut t = mu.time();
    let mut values = mu.into_values();
    for t_out in output_times(t, config.t_final, config.output_interval) {
        while t < t_out {
            let report = substep(&mut values, &fields, t, t_out - t, config, cache, coupling)?;
            t = if report.dt >= t_out - t { t_out } else { t + report.dt };
            run.steps.push(report);
            fields = Fields::compute(cache, &values, coupling)?;
        }
        let snapshot = GridDensity::from_parts(*cache.spec(), values, t);
        record(&snapshot, &mut run, &mut observe)?;
        values = snapshot.into_values();
    }
    Ok(run)
}

/// [`solve_with`] keeping every snapshot.
pub fn solve(mu0: &GridDensity, config: &PdeConfig, cache: &FieldCache, coupling: &CouplingMatrix) -> Result<PdeRun> {
    solve_with(mu0, config, cache, coupling, true, |_, _| Ok(()))
}
