//! Fourier-side norms of grid functions: `Ḣ^{-1}` energies and `Ḣ^s` seminorms.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_index, unflatten, NdFft};
use crate::grid::{GridDensity, GridSpec};
use crate::kernels::CoulombKernel;
use crate::meanfield::{source_field, FieldCache};

/// Tolerance on the mass difference of the two arguments of an `Ḣ^{-1}` distance.
pub const MASS_TOLERANCE: f64 = 1e-8;

/// Smallest `Ḣ^{-1}` distance accepted as a denominator.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-14;

/// Continuous Fourier transform `f̂(ξ) = ∫ f e^{-2πi x·ξ}` of a grid function,
/// sampled at `ξ_m = m / (P h)` by a zero-padded FFT of size `P` per axis.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    dim: usize,
    padded: usize,
    h: f64,
    support_radius: f64,
    coeffs: Vec<Complex64>,
}

/// Smallest even length `>= min` whose only prime factors are 2, 3 and 5.
fn fft_friendly(min: usize) -> usize {
    let mut m = min.max(2);
    loop {
        if m % 2 == 0 {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

impl SpectralDensity {
    /// Transform on a period of `padded >= n` nodes. Node `x = (i - n/2) h` goes to
    /// slot `(i - n/2) mod P`, so the phase is referred to the origin.
    pub fn with_padding(spec: &GridSpec, values: &[f64], padded: usize) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: values.len(),
            });
        }
        if padded < spec.n {
            return Err(Error::Unpadded { padded, n: spec.n });
        }
        let d = spec.dim;
        let n = spec.n;
        let h = spec.h();
        let fft = NdFft::new(d, padded);
        let mut buf = vec![Complex64::default(); fft.total()];
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let mut rho2: f64 = 0.0;
        let dv = spec.cell_volume();
        for (flat, v) in values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            unflatten(flat, n, &mut idx);
            let slot = idx.iter().fold(0, |acc, &i| acc * padded + (i + padded - n / 2) % padded);
            buf[slot] = Complex64::new(v * dv, 0.0);
            spec.position(flat, &mut x);
            rho2 = rho2.max(x.iter().map(|c| c * c).sum());
        }
        fft.forward(&mut buf);
        Ok(Self {
            dim: d,
            padded,
            h,
            support_radius: rho2.sqrt(),
            coeffs: buf,
        })
    }

    /// Transform padded so that a kernel truncated at twice the support radius sees
    /// no periodic images: `P h >= 4ρ + 4h`.
    pub fn new(spec: &GridSpec, values: &[f64]) -> Result<Self> {
        let h = spec.h();
        let rho = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(flat, _)| {
                let mut x = vec![0.0; spec.dim];
                spec.position(flat, &mut x);
                x.iter().map(|c| c * c).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        let need = (4.0 * rho / h).ceil() as usize + 4;
        Self::with_padding(spec, values, fft_friendly(need.max(spec.n)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn padded(&self) -> usize {
        self.padded
    }

    /// Largest node distance from the origin among nonzero values.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Frequency of index `m` along any axis.
    pub fn frequency(&self, m: usize) -> f64 {
        signed_index(m, self.padded) as f64 / (self.padded as f64 * self.h)
    }

    /// Spacing of the frequency lattice.
    pub fn frequency_step(&self) -> f64 {
        1.0 / (self.padded as f64 * self.h)
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Largest `|f̂(ξ) - conj f̂(-ξ)|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let p = self.padded;
        let d = self.dim;
        let mut idx = vec![0usize; d];
        let mut worst: f64 = 0.0;
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for (flat, c) in self.coeffs.iter().enumerate() {
            unflatten(flat, p, &mut idx);
            let mirror = idx.iter().fold(0, |acc, &i| acc * p + (p - i) % p);
            worst = worst.max((c - self.coeffs[mirror].conj()).norm());
        }
        worst / scale
    }

    /// `Σ_{ξ≠0} w(|ξ|) |f̂(ξ)|² Δξ^d`.
    fn weighted_sum<W: Fn(f64) -> f64 + Sync>(&self, weight: W) -> f64 {
        let p = self.padded;
        let d = self.dim;
        let dxi = self.frequency_step();
        let total: f64 = self
            .coeffs
            .par_chunks(p)
            .enumerate()
            .map(|(row, chunk)| {
                let mut idx = vec![0usize; d];
                unflatten(row * p, p, &mut idx);
                let base: f64 = idx[..d - 1].iter().map(|&m| self.frequency(m).powi(2)).sum();
                let mut acc = 0.0;
                for (q, c) in chunk.iter().enumerate() {
                    let xi2 = base + self.frequency(q).powi(2);
                    if xi2 > 0.0 {
                        acc += weight(xi2.sqrt()) * c.norm_sqr();
                    }
                }
                acc
            })
            .sum();
        total * dxi.powi(d as i32)
    }

    /// `∫ |f̂|² V̂` without the zero mode. In `d = 3` the kernel is truncated at
    /// `R = 2ρ`, which leaves `∫ f (V ⋆ f)` unchanged and makes the sum spectrally
    /// accurate; other dimensions use the plain symbol.
    pub fn coulomb_energy(&self, kernel: &CoulombKernel) -> f64 {
        let radius = 2.0 * self.support_radius + 2.0 * self.h;
        if kernel.truncated_fourier_symbol(1.0, radius).is_some() && (self.padded as f64) * self.h >= 2.0 * radius {
            self.weighted_sum(|xi| kernel.truncated_fourier_symbol(xi, radius).unwrap_or(0.0))
        } else {
            self.weighted_sum(|xi| kernel.fourier_symbol(xi))
        }
    }

    /// `‖f‖²_{Ḣ^s} = ∫ (2π|ξ|)^{2s} |f̂|²`, so `s = 1` gives `‖∇f‖²_2`.
    pub fn sobolev_seminorm_sq(&self, s: f64) -> f64 {
        self.weighted_sum(|xi| (2.0 * PI * xi).powf(2.0 * s))
    }
}

fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::invalid("density", "both densities must live on the same grid"));
    }
    Ok(())
}

/// `‖f‖²_{Ḣ^{-1}}` of a signed grid function of zero mass.
pub fn hminus1_norm_sq_values(spec: &GridSpec, values: &[f64], kernel: &CoulombKernel) -> Result<f64> {
    if kernel.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: kernel.dim(),
        });
    }
    let mass = spec.cell_volume() * values.iter().sum::<f64>();
    if mass.abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch { lhs: mass, rhs: 0.0 });
    }
    Ok(SpectralDensity::new(spec, values)?.coulomb_energy(kernel))
}

/// `‖μ₁ - μ₂‖²_{Ḣ^{-1}} = ∫ |μ̂₁ - μ̂₂|² V̂`.
pub fn hminus1_norm_sq(mu1: &GridDensity, mu2: &GridDensity, kernel: &CoulombKernel) -> Result<f64> {
    check_same_grid(mu1.spec(), mu2.spec())?;
    let (m1, m2) = (mu1.mass(), mu2.mass());
    if (m1 - m2).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch { lhs: m1, rhs: m2 });
    }
    let diff: Vec<f64> = mu1.values().iter().zip(mu2.values()).map(|(a, b)| a - b).collect();
    Ok(SpectralDensity::new(mu1.spec(), &diff)?.coulomb_energy(kernel))
}

/// Reaction term `h[μ] = μ (S ⋆ μ)` of the mean-field equation.
pub fn h_source(mu: &GridDensity, cache: &FieldCache) -> Vec<f64> {
    source_field(mu, cache)
}

/// `‖h[μ] - h[ν]‖_{Ḣ^{-1}} / ‖μ - ν‖_{Ḣ^{-1}}`.
pub fn h_lipschitz_ratio(mu: &GridDensity, nu: &GridDensity, cache: &FieldCache) -> Result<f64> {
    check_same_grid(mu.spec(), cache.spec())?;
    let denominator = hminus1_norm_sq(mu, nu, cache.kernel())?.max(0.0).sqrt();
    if denominator < COINCIDENCE_TOLERANCE {
        return Err(Error::DensitiesCoincide { distance: denominator });
    }
    if !cache.has_source() {
        return Ok(0.0);
    }
    let diff: Vec<f64> = h_source(mu, cache)
        .iter()
        .zip(h_source(nu, cache))
        .map(|(a, b)| a - b)
        .collect();
    let numerator = hminus1_norm_sq_values(mu.spec(), &diff, cache.kernel())?.max(0.0).sqrt();
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Bump;
    use crate::kernels::Convention;

    #[test]
    fn friendly_sizes() {
        assert_eq!(fft_friendly(7), 8);
        assert_eq!(fft_friendly(161), 162);
        assert_eq!(fft_friendly(155), 160);
    }

    #[test]
    fn real_input_gives_hermitian_spectrum() {
        let spec = GridSpec::new(3, 16, 1.0).unwrap();
        let mu = GridDensity::bump(spec, Bump { radius: 0.5, center_offset: 0.2 }).unwrap();
        let s = SpectralDensity::new(&spec, mu.values()).unwrap();
        assert!(s.hermitian_defect() < 1e-14);
        // zero mode carries the mass
        assert!((s.coefficients()[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_seminorm_matches_radial_quadrature() {
        use crate::grid::bump_profile;
        use crate::special::integrate;
        let spec = GridSpec::new(3, 64, 2.0).unwrap();
        let mu = GridDensity::bump(spec, Bump { radius: 1.0, center_offset: 0.0 }).unwrap();
        let s = SpectralDensity::with_padding(&spec, mu.values(), 64).unwrap();
        let spectral = s.sobolev_seminorm_sq(1.0);
        let norm = 4.0 * PI * integrate(|r| bump_profile(r * r) * r * r, 0.0, 1.0, 1e-15, 1e-13);
        let slope = |r: f64| bump_profile(r * r) * 2.0 * r / (1.0 - r * r).powi(2);
        let exact = 4.0 * PI * integrate(|r| (slope(r) * r).powi(2), 0.0, 1.0 - 1e-12, 1e-15, 1e-13) / (norm * norm);
        assert!((spectral - exact).abs() < 1e-3 * exact, "{spectral} {exact}");
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let spec = GridSpec::new(3, 16, 1.0).unwrap();
        let kernel = CoulombKernel::new(3, Convention::Newtonian).unwrap();
        let err = hminus1_norm_sq_values(&spec, &vec![1.0; spec.len()], &kernel).unwrap_err();
        assert!(matches!(err, Error::MassMismatch { .. }));
    }
}
