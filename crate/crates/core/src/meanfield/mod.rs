//! Mollified mean-field equation `∂_t μ + div(μ u) = μ (S ⋆ μ)` with
//! `u = -J ∇(χ_ε ⋆ V) ⋆ μ` on a uniform grid.

pub mod cache;
pub mod monitors;
pub mod solver;
pub mod transport;

pub use cache::{FieldCache, Fields};
pub use monitors::{gradient_magnitude, norm_monitors, support_radius, NormMonitors};
pub use solver::{pde_step, solve, solve_with, stable_dt, PdeConfig, PdeRun, Splitting, StepReport};
pub use transport::{centred_divergence, ssp_rk2_step, transport_rate};

use crate::error::Result;
use crate::grid::GridDensity;
use crate::kernels::CouplingMatrix;

/// Mollified velocity `-J (χ_ε ⋆ ∇V) ⋆ μ`, one array per axis.
pub fn velocity_field(mu: &GridDensity, cache: &FieldCache, coupling: &CouplingMatrix) -> Result<Vec<Vec<f64>>> {
    Ok(Fields::compute(cache, mu.values(), coupling)?.velocity)
}

/// Reaction term `h[μ] = μ (S ⋆ μ)`.
pub fn source_field(mu: &GridDensity, cache: &FieldCache) -> Vec<f64> {
    source_field_values(mu.values(), cache)
}

/// [`source_field`] on raw grid values (signed inputs allowed).
pub fn source_field_values(values: &[f64], cache: &FieldCache) -> Vec<f64> {
    let rate = cache.source_rate(values);
    values.iter().zip(&rate).map(|(m, s)| m * s).collect()
}
