use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{split_multiplier, Multiplier, PaddedConvolver};
use crate::grid::GridSpec;
use crate::kernels::{CoulombKernel, CouplingMatrix, SourceKernel, TruncatedGaussian};

/// Precomputed spectra for the mollified velocity and the source convolution.
///
/// The gradient kernels are the centred differences of `χ_ε ⋆ V` on the lattice,
/// `G_a(ℓ) = (W((ℓ + e_a) h) - W((ℓ - e_a) h)) / 2h`. A field built from them is the
/// exact centred gradient of the grid potential `W ⋆ μ`, so its centred divergence
/// vanishes identically for antisymmetric `J`.
#[derive(Debug, Clone)]
pub struct FieldCache {
    spec: GridSpec,
    kernel: CoulombKernel,
    mollifier: TruncatedGaussian,
    convolver: PaddedConvolver,
    gradient: Vec<Multiplier>,
    source: Option<Multiplier>,
    source_sup: f64,
}

impl FieldCache {
    /// Cache on a `2n`-padded grid.
    pub fn new(spec: GridSpec, kernel: &CoulombKernel, source: &SourceKernel, eps_moll: f64) -> Result<Self> {
        Self::with_padding(spec, kernel, source, eps_moll, 2 * spec.n)
    }

    pub fn with_padding(
        spec: GridSpec,
        kernel: &CoulombKernel,
        source: &SourceKernel,
        eps_moll: f64,
        padded: usize,
    ) -> Result<Self> {
        let d = spec.dim;
        if kernel.dim() != d || source.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if kernel.dim() != d { kernel.dim() } else { source.dim() },
            });
        }
        if !(eps_moll > 0.0) || !eps_moll.is_finite() {
            return Err(Error::invalid("grid.eps_moll", "must be positive and finite"));
        }
        let convolver = PaddedConvolver::new(d, spec.n, padded)?;
        let mollifier = TruncatedGaussian::from_width(d, eps_moll);
        let h = spec.h();
        let dv = spec.cell_volume();
        let potential = |lag: &[i64], shift: usize, sign: f64| {
            let r2: f64 = lag
                .iter()
                .enumerate()
                .map(|(b, l)| {
                    let v = (*l as f64 + if b == shift { sign } else { 0.0 }) * h;
                    v * v
                })
                .sum();
            mollifier.smoothed_potential(kernel, r2.sqrt())
        };
        let gradient = (0..d)
            .map(|a| {
                let spectrum = convolver.kernel_spectrum(dv, |lag| {
                    (potential(lag, a, 1.0) - potential(lag, a, -1.0)) / (2.0 * h)
                });
                split_multiplier(spectrum, true)
            })
            .collect();
        let source_mult = if source.is_zero() {
            None
        } else {
            let spectrum = convolver.kernel_spectrum(dv, |lag| {
                let x: Vec<f64> = lag.iter().map(|l| *l as f64 * h).collect();
                source.eval(&x)
            });
            Some(split_multiplier(spectrum, true))
        };
        Ok(Self {
            spec,
            kernel: kernel.clone(),
            mollifier,
            convolver,
            gradient,
            source: source_mult,
            source_sup: source.sup_norm(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &CoulombKernel {
        &self.kernel
    }

    pub fn mollifier(&self) -> &TruncatedGaussian {
        &self.mollifier
    }

    pub fn convolver(&self) -> &PaddedConvolver {
        &self.convolver
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    pub fn source_sup_norm(&self) -> f64 {
        self.source_sup
    }

    /// Gradient fields `G_a ⋆ μ` for every axis and `S ⋆ μ`, two convolutions per
    /// inverse transform.
    pub(crate) fn convolutions(&self, values: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let spectrum: Vec<Complex64> = self.convolver.spectrum(values);
        let mut jobs: Vec<&Multiplier> = self.gradient.iter().collect();
        if let Some(s) = &self.source {
            jobs.push(s);
        }
        let mut out = Vec::with_capacity(jobs.len());
        for pair in jobs.chunks(2) {
            let (a, b) = self.convolver.convolve_pair(&spectrum, pair[0], pair.get(1).copied());
            out.push(a);
            if pair.len() == 2 {
                out.push(b);
            }
        }
        let source = if self.source.is_some() {
            out.pop().unwrap()
        } else {
            vec![0.0; values.len()]
        };
        (out, source)
    }
}

impl FieldCache {
    /// `S ⋆ μ` alone (zero without a source).
    pub fn source_rate(&self, values: &[f64]) -> Vec<f64> {
        match &self.source {
            Some(s) => self.convolver.convolve(&self.convolver.spectrum(values), s),
            None => vec![0.0; values.len()],
        }
    }
}

/// Velocity and source rate of one density.
#[derive(Debug, Clone)]
pub struct Fields {
    /// `u_a = -(J G ⋆ μ)_a`, one array per axis.
    pub velocity: Vec<Vec<f64>>,
    /// `S ⋆ μ`.
    pub source_rate: Vec<f64>,
}

impl Fields {
    pub fn compute(cache: &FieldCache, values: &[f64], coupling: &CouplingMatrix) -> Result<Self> {
        coupling.validate_dim(cache.spec.dim)?;
        let (grad, source_rate) = cache.convolutions(values);
        let d = grad.len();
        let velocity = (0..d)
            .map(|a| {
                let mut u = vec![0.0; values.len()];
                for b in 0..d {
                    let j = coupling.entry(a, b);
                    if j == 0.0 {
                        continue;
                    }
                    for (o, g) in u.iter_mut().zip(&grad[b]) {
                        *o -= j * g;
                    }
                }
                u
            })
            .collect();
        Ok(Self { velocity, source_rate })
    }

    /// `Σ_a max |u_a|`.
    pub fn speed_sum(&self) -> f64 {
        self.velocity
            .iter()
            .map(|u| u.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
            .sum()
    }

    pub fn max_speed(&self) -> f64 {
        let n = self.source_rate.len();
        (0..n)
            .map(|i| self.velocity.iter().map(|u| u[i] * u[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn source_rate_sup(&self) -> f64 {
        self.source_rate.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}
