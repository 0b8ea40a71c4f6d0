//! Grid potentials `V ⋆ μ` with the singular lag handled analytically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{split_multiplier, Multiplier, PaddedConvolver};
use crate::grid::{GridDensity, GridSpec};
use crate::kernels::CoulombKernel;

/// Quadrature weight given to the lag-0 cell, where `V` is singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularCellRule {
    /// Exact mean of `V` over the cube cell. Second order.
    CellAverage,
    /// Epstein-zeta corrected punctured lattice sum. Fourth order for `d = 3`.
    #[default]
    LatticeZeta,
}

/// How `V ⋆ μ` is evaluated between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
}

/// Settings of the energy quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureRule {
    pub singular_cell: SingularCellRule,
    pub interpolation: Interpolation,
}

/// Cached spectrum of `V` on lattice lags for one grid.
#[derive(Debug, Clone)]
pub struct PotentialOperator {
    spec: GridSpec,
    kernel: CoulombKernel,
    rule: QuadratureRule,
    convolver: PaddedConvolver,
    multiplier: Multiplier,
}

impl PotentialOperator {
    pub fn new(spec: GridSpec, kernel: &CoulombKernel, rule: QuadratureRule) -> Result<Self> {
        if kernel.dim() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                got: kernel.dim(),
            });
        }
        let convolver = PaddedConvolver::new(spec.dim, spec.n, 2 * spec.n)?;
        let h = spec.h();
        let dv = spec.cell_volume();
        let origin = match rule.singular_cell {
            SingularCellRule::CellAverage => kernel.cell_average(h),
            SingularCellRule::LatticeZeta => kernel.lattice_correction_weight(h) / dv,
        };
        let spectrum = convolver.kernel_spectrum(dv, |lag| {
            let r2: f64 = lag.iter().map(|l| (*l as f64 * h).powi(2)).sum();
            if r2 == 0.0 {
                origin
            } else {
                kernel.from_r2(r2)
            }
        });
        Ok(Self {
            spec,
            kernel: kernel.clone(),
            rule,
            convolver,
            multiplier: split_multiplier(spectrum, false),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &CoulombKernel {
        &self.kernel
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    /// `V ⋆ f` at the nodes for any signed grid function.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.spec.len() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.len(),
                got: values.len(),
            });
        }
        Ok(self.convolver.convolve(&self.convolver.spectrum(values), &self.multiplier))
    }

    /// `∫ f (V ⋆ f)` by node quadrature.
    pub fn quadratic_form(&self, values: &[f64]) -> Result<f64> {
        let phi = self.apply(values)?;
        Ok(self.spec.cell_volume() * values.iter().zip(&phi).map(|(f, p)| f * p).sum::<f64>())
    }
}

/// `V ⋆ μ` of one density, ready for point evaluation.
#[derive(Debug, Clone)]
pub struct ContinuumPotential {
    spec: GridSpec,
    interpolation: Interpolation,
    time: f64,
    potential: Vec<f64>,
    continuum: f64,
}

impl ContinuumPotential {
    pub fn new(mu: &GridDensity, operator: &PotentialOperator) -> Result<Self> {
        if mu.spec() != operator.spec() {
            return Err(Error::invalid("density", "grid differs from the potential operator's grid"));
        }
        let potential = operator.apply(mu.values())?;
        let continuum =
            mu.spec().cell_volume() * mu.values().iter().zip(&potential).map(|(m, p)| m * p).sum::<f64>();
        Ok(Self {
            spec: *mu.spec(),
            interpolation: operator.rule().interpolation,
            time: mu.time(),
            potential,
            continuum,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Node values of `V ⋆ μ`.
    pub fn values(&self) -> &[f64] {
        &self.potential
    }

    /// `∫ μ (V ⋆ μ)`.
    pub fn continuum_term(&self) -> f64 {
        self.continuum
    }

    /// `(V ⋆ μ)(x)`; `None` outside the node hull.
    pub fn at(&self, x: &[f64]) -> Option<f64> {
        match self.interpolation {
            Interpolation::Linear => self.spec.interpolate(&self.potential, x),
            Interpolation::Cubic => self.spec.interpolate_cubic(&self.potential, x),
        }
    }
}

/// `V ⋆ μ` for a radial density in `d = 3` by the shell theorem:
/// `Φ(r) = 4πa (r^{-1} ∫_0^r ρ s² ds + ∫_r^∞ ρ s ds)`.
pub fn radial_potential_3d<F: Fn(f64) -> f64>(kernel: &CoulombKernel, profile: F, support: f64, r: f64) -> f64 {
    use crate::special::integrate;
    use std::f64::consts::PI;
    let a = kernel.prefactor();
    let inner = if r > 0.0 {
        integrate(|s| profile(s) * s * s, 0.0, r.min(support), 1e-15, 1e-12) / r
    } else {
        0.0
    };
    let outer = if r < support {
        integrate(|s| profile(s) * s, r, support, 1e-15, 1e-12)
    } else {
        0.0
    };
    4.0 * PI * a * (inner + outer)
}
