use std::f64::consts::PI;

use crate::special::{gamma, lower_gamma_half, unit_sphere_area};

use super::coulomb::CoulombKernel;

/// Unit-mass Gaussian `K^1(z) = π^{-d/2} exp(-|z|^2)` and its dilations
/// `K^1_δ(z) = δ^{-d} K^1(z / δ)`. Its Fourier transform `exp(-π²|ξ|²)` is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMollifier {
    dim: usize,
}

impl GaussianMollifier {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K^1_δ` as a function of the radius.
    pub fn density(&self, r: f64, delta: f64) -> f64 {
        let d = self.dim as f64;
        let s = r / delta;
        PI.powf(-d / 2.0) * (-s * s).exp() / delta.powf(d)
    }

    /// Unitary Fourier transform of `K^1_δ`.
    pub fn fourier(&self, xi_norm: f64, delta: f64) -> f64 {
        (-PI * PI * delta * delta * xi_norm * xi_norm).exp()
    }

    /// Mass of `K^1_δ` inside the ball of radius `r`.
    pub fn enclosed_mass(&self, r: f64, delta: f64) -> f64 {
        let s = r / delta;
        lower_gamma_half(self.dim, s * s)
    }

    /// `(K^1 ⋆ |·|^{-k})(ρ) = ρ^{-k} P(d/2, ρ²) + e^{-ρ²} / Γ(d/2)` for `k = d - 2`.
    ///
    /// Follows from the shell theorem: `|·|^{-k}` is harmonic away from the origin,
    /// so shells inside radius ρ act as point masses and outer shells contribute
    /// their (constant) potential.
    pub fn unit_smoothed_power(&self, rho: f64) -> f64 {
        let half = self.dim as f64 / 2.0;
        let k = (self.dim - 2) as i32;
        let outer = (-rho * rho).exp() / gamma(half);
        if rho < 1e-4 {
            // P(d/2, ρ²) ρ^{-k} = ρ² / Γ(d/2 + 1) (1 - d ρ² / (d + 2) + ...)
            let r2 = rho * rho;
            let inner = r2 / gamma(half + 1.0) * (1.0 - half * r2 / (half + 1.0));
            return inner + outer;
        }
        rho.powi(-k) * lower_gamma_half(self.dim, rho * rho) + outer
    }

    /// `(K^1_δ ⋆ V)(x)` for a Coulomb kernel `V = a |x|^{-k}`.
    pub fn smoothed_coulomb(&self, kernel: &CoulombKernel, r: f64, delta: f64) -> f64 {
        let k = kernel.exponent() as i32;
        kernel.prefactor() * delta.powi(-k) * self.unit_smoothed_power(r / delta)
    }
}

/// Gaussian mollifier of standard deviation `σ`, truncated at `4σ` and renormalized
/// to unit mass. Smoothing scale of the mean-field solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGaussian {
    dim: usize,
    sigma: f64,
    norm: f64,
}

/// Truncation radius in units of σ.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

impl TruncatedGaussian {
    /// Mollifier with width `eps` (standard deviation `eps / 2`).
    pub fn from_width(dim: usize, eps: f64) -> Self {
        let sigma = 0.5 * eps;
        let cut = 0.5 * TRUNCATION_SIGMAS * TRUNCATION_SIGMAS;
        Self {
            dim,
            sigma,
            norm: lower_gamma_half(dim, cut),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn support_radius(&self) -> f64 {
        TRUNCATION_SIGMAS * self.sigma
    }

    pub fn density(&self, r: f64) -> f64 {
        if r > self.support_radius() {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        (2.0 * PI * s2).powf(-(self.dim as f64) / 2.0) * (-r * r / (2.0 * s2)).exp() / self.norm
    }

    pub fn enclosed_mass(&self, r: f64) -> f64 {
        if r >= self.support_radius() {
            return 1.0;
        }
        lower_gamma_half(self.dim, r * r / (2.0 * self.sigma * self.sigma)) / self.norm
    }

    /// Radial profile of `χ ⋆ V`.
    ///
    /// Shells inside `r` act as a point mass and the outer shells contribute their
    /// constant potential; since `d - 1 - k = 1` the outer integral is elementary.
    pub fn smoothed_potential(&self, kernel: &CoulombKernel, r: f64) -> f64 {
        let rc = self.support_radius();
        if r >= rc {
            return kernel.radial(r);
        }
        let d = self.dim as f64;
        let s2 = self.sigma * self.sigma;
        let inner = if r < 1e-3 * self.sigma {
            // r^{-k} times an enclosed mass ~ r^d
            let half = self.dim as f64 / 2.0;
            kernel.prefactor() * r * r * (2.0 * s2).powf(-half) / gamma(half + 1.0) / self.norm
        } else {
            kernel.radial(r) * self.enclosed_mass(r)
        };
        let outer = kernel.prefactor() * unit_sphere_area(self.dim) * (2.0 * PI * s2).powf(-d / 2.0) * s2
            * ((-r * r / (2.0 * s2)).exp() - (-rc * rc / (2.0 * s2)).exp())
            / self.norm;
        inner + outer
    }

    /// Scalar `g` with `∇(χ ⋆ V)(x) = g x`; zero at the origin.
    pub fn smoothed_grad_factor(&self, kernel: &CoulombKernel, r2: f64) -> f64 {
        if r2 == 0.0 {
            return 0.0;
        }
        let r = r2.sqrt();
        let mass = self.enclosed_mass(r);
        if r < 1e-3 * self.sigma {
            // enclosed mass ~ c r^d cancels the r^{-d} of the raw gradient
            let half = self.dim as f64 / 2.0;
            let s2 = 2.0 * self.sigma * self.sigma;
            let lead = (r2 / s2).powf(half) / gamma(half + 1.0) / self.norm;
            let k = kernel.exponent() as f64;
            return -kernel.prefactor() * k * lead / r.powi(self.dim as i32);
        }
        kernel.grad_factor(r2) * mass
    }
}
