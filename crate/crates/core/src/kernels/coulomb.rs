use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{cube_integral_power, epstein_zeta, unit_sphere_area};

/// Normalization of the repulsive power law `V(x) = a |x|^{-k}`, `k = d - 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `V = |x|^{-k}`.
    #[default]
    Raw,
    /// `V = |x|^{-k} / k`.
    Scaled,
    /// `V = |x|^{-k} / (k |S^{d-1}|)`, so that `-ΔV = δ_0`.
    Newtonian,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::Raw => "raw",
            Convention::Scaled => "scaled",
            Convention::Newtonian => "newtonian",
        }
    }
}

/// Repulsive Coulomb interaction in dimension `d >= 3`.
///
/// `-ΔV = c_d δ_0` with `c_d = a k |S^{d-1}|`. Fourier transforms use the
/// unitary convention `f̂(ξ) = ∫ f(x) e^{-2πi x·ξ} dx`, so `V̂(ξ) = c_d / (4π²|ξ|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoulombKernel {
    dim: usize,
    k: usize,
    convention: Convention,
    prefactor: f64,
    laplacian_constant: f64,
}

impl CoulombKernel {
    pub fn new(dim: usize, convention: Convention) -> Result<Self> {
        if dim < 3 {
            return Err(Error::invalid("dimension", format!("need d >= 3, got {dim}")));
        }
        let k = dim - 2;
        let sphere = unit_sphere_area(dim);
        let prefactor = match convention {
            Convention::Raw => 1.0,
            Convention::Scaled => 1.0 / k as f64,
            Convention::Newtonian => 1.0 / (k as f64 * sphere),
        };
        Ok(Self {
            dim,
            k,
            convention,
            prefactor,
            laplacian_constant: prefactor * k as f64 * sphere,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Power-law exponent `k = d - 2`.
    pub fn exponent(&self) -> usize {
        self.k
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// The constant `a` in `V = a |x|^{-k}`.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// `c_d` in `-ΔV = c_d δ_0`.
    pub fn laplacian_constant(&self) -> f64 {
        self.laplacian_constant
    }

    fn check(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return Err(Error::SingularPoint);
        }
        Ok(r2)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let r2 = self.check(x)?;
        Ok(self.from_r2(r2))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r2 = self.check(x)?;
        let mut out = vec![0.0; self.dim];
        let g = self.grad_factor(r2);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = g * xi;
        }
        Ok(out)
    }

    /// `V` as a function of the radius; `+inf` at the origin.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        self.prefactor * r.powi(-(self.k as i32))
    }

    /// `V` as a function of `|x|^2`.
    #[inline]
    pub fn from_r2(&self, r2: f64) -> f64 {
        self.prefactor * inv_pow_from_r2(r2, self.k)
    }

    /// Scalar `g` with `∇V(x) = g x`, i.e. `g = -a k |x|^{-k-2}`.
    #[inline]
    pub fn grad_factor(&self, r2: f64) -> f64 {
        -self.prefactor * self.k as f64 * inv_pow_from_r2(r2, self.k + 2)
    }

    /// `V̂(ξ) = c_d / (4π² |ξ|²)`.
    pub fn fourier_symbol(&self, xi_norm: f64) -> f64 {
        self.laplacian_constant / (4.0 * PI * PI * xi_norm * xi_norm)
    }

    /// Fourier transform of `V 1_{|x| <= R}`; available in closed form for `d = 3`.
    pub fn truncated_fourier_symbol(&self, xi_norm: f64, radius: f64) -> Option<f64> {
        if self.dim != 3 {
            return None;
        }
        let a = self.prefactor;
        if xi_norm == 0.0 {
            return Some(2.0 * PI * a * radius * radius);
        }
        let arg = PI * radius * xi_norm;
        // 1 - cos(2θ) = 2 sin²θ, stable for small arguments
        Some(a * 2.0 * arg.sin().powi(2) / (PI * xi_norm * xi_norm))
    }

    /// Mean of `V` over a centered cube of side `h`.
    pub fn cell_average(&self, h: f64) -> f64 {
        self.prefactor * cube_integral_power(self.dim, self.k as f64) / h.powi(self.k as i32)
    }

    /// Weight that turns the punctured lattice sum `h^d Σ_{n≠0} V(nh) f(nh)` into a
    /// high-order quadrature of `∫ V f`: `-a Z_d(k) h^{d-k}` (Epstein zeta).
    pub fn lattice_correction_weight(&self, h: f64) -> f64 {
        -self.prefactor * epstein_zeta(self.dim, self.k) * h.powi((self.dim - self.k) as i32)
    }
}

/// `|x|^{-p}` from `|x|^2` without a square root when `p` is even.
#[inline]
pub(crate) fn inv_pow_from_r2(r2: f64, p: usize) -> f64 {
    if p % 2 == 0 {
        r2.powi(-((p / 2) as i32))
    } else {
        let inv = 1.0 / r2.sqrt();
        inv.powi(p as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(d: usize) -> CoulombKernel {
        CoulombKernel::new(d, Convention::Raw).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(raw(3).eval(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(raw(3).eval(&[0.0, 2.0, 0.0]).unwrap(), 0.5);
        assert!((raw(4).eval(&[2.0, 0.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grad_examples() {
        let k = raw(3);
        assert_eq!(k.grad(&[1.0, 0.0, 0.0]).unwrap(), vec![-1.0, 0.0, 0.0]);
        assert_eq!(k.grad(&[0.0, 0.0, -1.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        let g = k.grad(&[3.0, 4.0, 0.0]).unwrap();
        assert!((g[0] + 3.0 / 125.0).abs() < 1e-16);
        assert!((g[1] + 4.0 / 125.0).abs() < 1e-16);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn singular_point_is_an_error() {
        assert!(matches!(raw(3).eval(&[0.0; 3]), Err(Error::SingularPoint)));
        assert!(matches!(raw(3).grad(&[0.0; 3]), Err(Error::SingularPoint)));
        assert!(matches!(
            raw(3).eval(&[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn conventions_and_laplacian_constant() {
        let p = CoulombKernel::new(4, Convention::Scaled).unwrap();
        assert!((p.eval(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let n = CoulombKernel::new(3, Convention::Newtonian).unwrap();
        assert!((n.laplacian_constant() - 1.0).abs() < 1e-14);
        assert!((raw(3).laplacian_constant() - 4.0 * PI).abs() < 1e-12);
        assert!(CoulombKernel::new(2, Convention::Raw).is_err());
    }

    #[test]
    fn truncated_symbol_limits_to_full_symbol() {
        let k = raw(3);
        // averaged over the oscillation the truncated symbol equals V̂
        let xi = 3.7;
        let r = 1000.25 / xi;
        let full = k.fourier_symbol(xi);
        let trunc = k.truncated_fourier_symbol(xi, r).unwrap();
        assert!(trunc <= 2.0 * full + 1e-12);
        assert!(raw(4).truncated_fourier_symbol(1.0, 1.0).is_none());
    }

    #[test]
    fn lattice_weight_exceeds_cell_average_in_3d() {
        let k = raw(3);
        let h = 0.1;
        let w = k.lattice_correction_weight(h);
        let avg = k.cell_average(h) * h.powi(3);
        assert!((w / (h * h) - 2.837_297_479_48).abs() < 1e-8);
        assert!((avg / (h * h) - 2.380_077_4).abs() < 1e-6);
    }
}
