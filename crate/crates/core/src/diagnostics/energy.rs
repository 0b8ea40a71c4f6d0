//! Modulated energy of a particle cloud against a grid density.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::kernels::{CoulombKernel, TruncationCutoff};
use crate::particles::ParticleState;

use super::potential::{ContinuumPotential, PotentialOperator, QuadratureRule};

/// `𝓔_N = self + cross + continuum` with
/// `self = N^{-2} Σ_{i≠j} m_i m_j V(x_i - x_j)`, `cross = -2 N^{-1} Σ_i m_i (V⋆μ)(x_i)`
/// and `continuum = ∫ μ (V⋆μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulatedEnergyBreakdown {
    pub t: f64,
    pub self_term: f64,
    pub cross_term: f64,
    pub continuum_term: f64,
    pub total: f64,
}

impl ModulatedEnergyBreakdown {
    pub fn new(t: f64, self_term: f64, cross_term: f64, continuum_term: f64) -> Self {
        Self {
            t,
            self_term,
            cross_term,
            continuum_term,
            total: self_term + cross_term + continuum_term,
        }
    }
}

/// Near-diagonal part of the particle self-interaction and the remainder of `𝓔_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedEnergySplit {
    /// `N^{-2} Σ_{i≠j} m_i m_j (1 - ζ_δ)(x_i - x_j) V(x_i - x_j)`.
    pub near_diag: f64,
    /// `𝓔_N - near_diag`.
    pub far_field: f64,
    pub total: f64,
}

/// [`modulated_energy_with`] using a fresh potential with the default quadrature.
pub fn modulated_energy(
    state: &ParticleState,
    mu: &GridDensity,
    kernel: &CoulombKernel,
) -> Result<ModulatedEnergyBreakdown> {
    let op = PotentialOperator::new(*mu.spec(), kernel, QuadratureRule::default())?;
    modulated_energy_with(state, &ContinuumPotential::new(mu, &op)?, kernel)
}

/// Modulated energy against a precomputed `V ⋆ μ`.
pub fn modulated_energy_with(
    state: &ParticleState,
    potential: &ContinuumPotential,
    kernel: &CoulombKernel,
) -> Result<ModulatedEnergyBreakdown> {
    check_dims(state, kernel)?;
    let n = state.n();
    if n == 0 {
        return Ok(ModulatedEnergyBreakdown::new(state.t(), 0.0, 0.0, potential.continuum_term()));
    }
    let nf = n as f64;
    let self_term = state.interaction_energy(kernel)? / (nf * nf);
    let cross_term = -2.0 * cross_sum(state, potential)? / nf;
    Ok(ModulatedEnergyBreakdown::new(state.t(), self_term, cross_term, potential.continuum_term()))
}

/// `Σ_i m_i (V ⋆ μ)(x_i)`.
fn cross_sum(state: &ParticleState, potential: &ContinuumPotential) -> Result<f64> {
    let values: Result<Vec<f64>> = (0..state.n())
        .into_par_iter()
        .map(|i| {
            potential
                .at(state.position(i))
                .map(|p| state.weights()[i] * p)
                .ok_or(Error::OutsideBox { index: i })
        })
        .collect();
    Ok(values?.iter().sum())
}

fn check_dims(state: &ParticleState, kernel: &CoulombKernel) -> Result<()> {
    if state.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: state.dim(),
        });
    }
    Ok(())
}

/// Splits `𝓔_N` at the scale `δ` of the cutoff.
pub fn truncated_offdiag_energy(
    state: &ParticleState,
    mu: &GridDensity,
    kernel: &CoulombKernel,
    cutoff: &TruncationCutoff,
) -> Result<TruncatedEnergySplit> {
    let op = PotentialOperator::new(*mu.spec(), kernel, QuadratureRule::default())?;
    truncated_offdiag_energy_with(state, &ContinuumPotential::new(mu, &op)?, kernel, cutoff)
}

pub fn truncated_offdiag_energy_with(
    state: &ParticleState,
    potential: &ContinuumPotential,
    kernel: &CoulombKernel,
    cutoff: &TruncationCutoff,
) -> Result<TruncatedEnergySplit> {
    check_dims(state, kernel)?;
    let n = state.n();
    if n == 0 {
        let c = potential.continuum_term();
        return Ok(TruncatedEnergySplit {
            near_diag: 0.0,
            far_field: c,
            total: c,
        });
    }
    let d = state.dim();
    let x = state.positions();
    let m = state.weights();
    let reach2 = (2.0 * cutoff.delta()).powi(2);
    let rows: Result<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &x[i * d..(i + 1) * d];
            let (mut full, mut near) = (0.0, 0.0);
            for j in i + 1..n {
                let xj = &x[j * d..(j + 1) * d];
                let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 == 0.0 {
                    return Err(Error::Collision { i, j });
                }
                let v = m[j] * kernel.from_r2(r2);
                full += v;
                if r2 < reach2 {
                    near += cutoff.complement(r2.sqrt()) * v;
                }
            }
            Ok((2.0 * m[i] * full, 2.0 * m[i] * near))
        })
        .collect();
    let (full, near) = rows?.iter().fold((0.0, 0.0), |(f, g), (a, b)| (f + a, g + b));
    let nf = n as f64;
    let total = ModulatedEnergyBreakdown::new(
        state.t(),
        full / (nf * nf),
        -2.0 * cross_sum(state, potential)? / nf,
        potential.continuum_term(),
    )
    .total;
    let near_diag = near / (nf * nf);
    Ok(TruncatedEnergySplit {
        near_diag,
        far_field: total - near_diag,
        total,
    })
}
