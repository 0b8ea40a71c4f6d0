//! Weak-distance probe: `∫ φ d(μ_N - μ)` against the norms that control it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridDensity, GUARD_CELLS};
use crate::kernels::CoulombKernel;
use crate::meanfield::gradient_magnitude;
use crate::particles::ParticleState;

use super::energy::{modulated_energy_with, ModulatedEnergyBreakdown};
use super::potential::{ContinuumPotential, PotentialOperator, QuadratureRule};
use super::spectral::SpectralDensity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityProbe {
    /// `N^{-1} Σ m_i φ(x_i) - ∫ φ μ`.
    pub lhs: f64,
    /// `sup|φ| + sup|∇φ|` by centred differences.
    pub lipschitz_norm: f64,
    /// `‖φ‖_{Ḣ^{(d-k)/2}}` by spectral quadrature.
    pub sobolev_norm: f64,
    pub energy: ModulatedEnergyBreakdown,
}

/// Tests `φ` (node values on `μ`'s grid) against `μ_N - μ`.
pub fn coercivity_probe(
    state: &ParticleState,
    mu: &GridDensity,
    phi: &[f64],
    kernel: &CoulombKernel,
) -> Result<CoercivityProbe> {
    let spec = mu.spec();
    if phi.len() != spec.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.len(),
            got: phi.len(),
        });
    }
    // the interpolation stencil must never see the box edge
    if (0..spec.len()).any(|i| phi[i] != 0.0 && spec.in_guard_shell(i)) {
        return Err(Error::invalid(
            "phi",
            format!("test function must vanish on the outer {GUARD_CELLS} layers of the box"),
        ));
    }
    let n = state.n();
    let mut particle = 0.0;
    for i in 0..n {
        let v = spec.interpolate_cubic(phi, state.position(i)).ok_or(Error::OutsideBox { index: i })?;
        particle += state.weights()[i] * v;
    }
    if n > 0 {
        particle /= n as f64;
    }
    let continuum = spec.cell_volume() * phi.iter().zip(mu.values()).map(|(p, m)| p * m).sum::<f64>();
    let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let grad_sup = gradient_magnitude(spec, phi).iter().fold(0.0f64, |m, v| m.max(*v));
    let order = (spec.dim - kernel.exponent()) as f64 / 2.0;
    let sobolev = SpectralDensity::with_padding(spec, phi, spec.n)?.sobolev_seminorm_sq(order).sqrt();
    let op = PotentialOperator::new(*spec, kernel, QuadratureRule::default())?;
    let energy = modulated_energy_with(state, &ContinuumPotential::new(mu, &op)?, kernel)?;
    Ok(CoercivityProbe {
        lhs: if n > 0 { particle - continuum } else { -continuum },
        lipschitz_norm: sup + grad_sup,
        sobolev_norm: sobolev,
        energy,
    })
}
