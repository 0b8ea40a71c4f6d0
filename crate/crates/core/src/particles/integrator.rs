use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSet;

use super::dynamics::rhs_vector;
use super::monitors::{weight_monitors, Snapshot};
use super::state::ParticleState;

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4 { dt: f64 },
    /// Runge–Kutta–Fehlberg 4(5) with per-component error control.
    Rkf45 { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_final: f64,
    /// Time between recorded snapshots; the integrator lands on each output time.
    pub record_interval: f64,
    /// Abort when the minimum pair distance drops below this length.
    pub separation_floor: f64,
}

impl IntegratorConfig {
    pub const DEFAULT_SEPARATION_FLOOR: f64 = 1e-6;

    pub fn rkf45(t_final: f64, tol: f64) -> Self {
        Self {
            method: Method::Rkf45 {
                abs_tol: tol,
                rel_tol: tol,
            },
            t_final,
            record_interval: t_final,
            separation_floor: Self::DEFAULT_SEPARATION_FLOOR,
        }
    }

    pub fn with_record_interval(mut self, interval: f64) -> Self {
        self.record_interval = interval;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::invalid("integrator.t_final", "must be positive and finite"));
        }
        if !(self.record_interval > 0.0) {
            return Err(Error::invalid("integrator.record_interval", "must be positive"));
        }
        if !(self.separation_floor >= 0.0) {
            return Err(Error::invalid("integrator.separation_floor", "must be nonnegative"));
        }
        match self.method {
            Method::Rk4 { dt } if !(dt > 0.0) => {
                Err(Error::invalid("integrator.dt", "must be positive"))
            }
            Method::Rkf45 { abs_tol, rel_tol } if !(abs_tol > 0.0 && rel_tol > 0.0) => {
                Err(Error::invalid("integrator.tolerance", "tolerances must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Output times `interval, 2 interval, ..., t_final` after `t0`.
    pub fn output_times(&self, t0: f64) -> Vec<f64> {
        crate::output::output_times(t0, self.t_final, self.record_interval)
    }
}

/// Recorded trajectory: snapshots and monitor values at strictly increasing times.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub states: Vec<ParticleState>,
    pub monitors: Vec<Snapshot>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.monitors.iter().map(|m| m.t).collect()
    }

    pub fn last(&self) -> Option<&ParticleState> {
        self.states.last()
    }
}

// Fehlberg tableau (the system is autonomous, so the nodes c_i are not needed)
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

struct Stepper<'a> {
    kernels: &'a KernelSet,
    n: usize,
    stages: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    /// Minimum squared separation seen in the latest stage evaluations.
    min_r2: f64,
}

impl<'a> Stepper<'a> {
    fn new(kernels: &'a KernelSet, n: usize, len: usize) -> Self {
        Self {
            kernels,
            n,
            stages: vec![vec![0.0; len]; 6],
            tmp: vec![0.0; len],
            min_r2: f64::INFINITY,
        }
    }

    fn eval(&mut self, stage: usize) -> Result<()> {
        let r2 = rhs_vector(self.kernels, self.n, &self.tmp, &mut self.stages[stage])?;
        self.min_r2 = self.min_r2.min(r2);
        Ok(())
    }

    fn rk4(&mut self, y: &mut [f64], dt: f64) -> Result<()> {
        self.tmp.copy_from_slice(y);
        self.eval(0)?;
        for (stage, frac) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..y.len() {
                self.tmp[i] = y[i] + frac * dt * self.stages[stage - 1][i];
            }
            self.eval(stage)?;
        }
        let s = &self.stages;
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (s[0][i] + 2.0 * s[1][i] + 2.0 * s[2][i] + s[3][i]);
        }
        Ok(())
    }

    /// One Fehlberg attempt; writes the fifth-order proposal into `out` and
    /// returns the scaled error norm.
    fn rkf45(&mut self, y: &[f64], dt: f64, abs_tol: f64, rel_tol: f64, out: &mut [f64]) -> Result<f64> {
        self.tmp.copy_from_slice(y);
        self.eval(0)?;
        for stage in 1..6 {
            for i in 0..y.len() {
                let mut acc = 0.0;
                for (p, a) in A[stage].iter().enumerate().take(stage) {
                    acc += a * self.stages[p][i];
                }
                self.tmp[i] = y[i] + dt * acc;
            }
            self.eval(stage)?;
        }
        let mut err_norm: f64 = 0.0;
        for i in 0..y.len() {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..6 {
                hi += B5[s] * self.stages[s][i];
                lo += B4[s] * self.stages[s][i];
            }
            out[i] = y[i] + dt * hi;
            let scale = abs_tol + rel_tol * y[i].abs().max(out[i].abs());
            err_norm = err_norm.max((dt * (hi - lo)).abs() / scale);
        }
        Ok(err_norm)
    }
}

/// Integrates the particle system, calling `observe` at `t0` and at every output time.
pub fn integrate_with<F>(
    state0: &ParticleState,
    config: &IntegratorConfig,
    kernels: &KernelSet,
    mut observe: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(&ParticleState) -> Result<()>,
{
    config.validate()?;
    state0.validate()?;
    if state0.dim() != kernels.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernels.dim(),
            got: state0.dim(),
        });
    }
    let d = state0.dim();
    let n = state0.n();
    let mut y = state0.to_vector();
    let mut t = state0.t();
    let mut record = TrajectoryRecord::default();
    let mut stepper = Stepper::new(kernels, n, y.len());

    let snapshot = |y: &[f64], t: f64, record: &mut TrajectoryRecord| -> Result<ParticleState> {
        let state = ParticleState::from_vector(d, n, y, t);
        let w = weight_monitors(&state);
        let min_separation = if n >= 2 { state.min_separation()? } else { f64::INFINITY };
        let energy = state.interaction_energy(&kernels.coulomb)?;
        record.monitors.push(Snapshot {
            t,
            mean_weight: w.mean,
            max_weight: w.max,
            min_weight: w.min,
            min_separation,
            interaction_energy: energy,
        });
        record.states.push(state.clone());
        Ok(state)
    };

    let first = snapshot(&y, t, &mut record)?;
    let floor2 = config.separation_floor * config.separation_floor;
    if n >= 2 && record.monitors[0].min_separation < config.separation_floor {
        return Err(Error::SeparationFloor {
            t,
            separation: record.monitors[0].min_separation,
            floor: config.separation_floor,
        });
    }
    observe(&first)?;
    let mut dt = match config.method {
        Method::Rk4 { dt } => dt,
        Method::Rkf45 { .. } => (1e-3 * config.record_interval).min(1e-3),
    };
    let mut proposal = vec![0.0; y.len()];

    for t_out in config.output_times(t) {
        while t < t_out {
            let remaining = t_out - t;
            let landing = dt >= remaining * (1.0 - 1e-12);
            let h = if landing { remaining } else { dt };
            stepper.min_r2 = f64::INFINITY;
            match config.method {
                Method::Rk4 { .. } => {
                    stepper.rk4(&mut y, h)?;
                    t = if landing { t_out } else { t + h };
                    record.steps_accepted += 1;
                }
                Method::Rkf45 { abs_tol, rel_tol } => {
                    let err = stepper.rkf45(&y, h, abs_tol, rel_tol, &mut proposal)?;
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if err <= 1.0 {
                        std::mem::swap(&mut y, &mut proposal);
                        t = if landing { t_out } else { t + h };
                        record.steps_accepted += 1;
                        // keep the controller's step when the step was shortened to land
                        dt = if landing { dt.max(h * factor) } else { h * factor };
                    } else {
                        record.steps_rejected += 1;
                        dt = h * factor;
                        if dt < 1e-14 * t.abs().max(1.0) {
                            return Err(Error::StepUnderflow { t, dt });
                        }
                        continue;
                    }
                }
            }
            if stepper.min_r2 < floor2 {
                return Err(Error::SeparationFloor {
                    t,
                    separation: stepper.min_r2.sqrt(),
                    floor: config.separation_floor,
                });
            }
        }
        let state = snapshot(&y, t, &mut record)?;
        if n >= 2 {
            let sep = record.monitors.last().map(|m| m.min_separation).unwrap_or(f64::INFINITY);
            if sep < config.separation_floor {
                return Err(Error::SeparationFloor {
                    t,
                    separation: sep,
                    floor: config.separation_floor,
                });
            }
        }
        observe(&state)?;
    }
    Ok(record)
}

/// Integrates to `t_final`, recording snapshots at every output time.
pub fn integrate(state0: &ParticleState, config: &IntegratorConfig, kernels: &KernelSet) -> Result<TrajectoryRecord> {
    integrate_with(state0, config, kernels, |_| Ok(()))
}

/// Advances a state by a single step of the configured method (fixed `dt` for
/// RK4; one accepted adaptive step starting from `dt_hint` for RKF45).
pub fn step(state: &ParticleState, config: &IntegratorConfig, kernels: &KernelSet, dt_hint: f64) -> Result<(ParticleState, f64)> {
    let d = state.dim();
    let n = state.n();
    let mut y = state.to_vector();
    let mut stepper = Stepper::new(kernels, n, y.len());
    match config.method {
        Method::Rk4 { dt } => {
            stepper.rk4(&mut y, dt)?;
            Ok((ParticleState::from_vector(d, n, &y, state.t() + dt), dt))
        }
        Method::Rkf45 { abs_tol, rel_tol } => {
            let mut h = dt_hint;
            let mut out = vec![0.0; y.len()];
            loop {
                let err = stepper.rkf45(&y, h, abs_tol, rel_tol, &mut out)?;
                if err <= 1.0 {
                    return Ok((ParticleState::from_vector(d, n, &out, state.t() + h), h));
                }
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < 1e-14 * state.t().abs().max(1.0) {
                    return Err(Error::StepUnderflow { t: state.t(), dt: h });
                }
            }
        }
    }
}
