use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

type SourceFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Closed-form families for the odd weight-exchange kernel `S`.
#[derive(Clone)]
pub enum SourceFamily {
    /// `S ≡ 0`: the classical constant-weight setting.
    Zero,
    /// `S(x) = s0 (v·x) exp(-|x|^2 / 2)` with `|v| = 1`.
    GaussianDipole { amplitude: f64, direction: Vec<f64> },
    /// User closure with declared bounds; oddness is checked by [`SourceKernel::check_oddness`].
    Custom {
        func: Arc<SourceFn>,
        sup_norm: f64,
        lipschitz: f64,
    },
}

impl fmt::Debug for SourceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceFamily::Zero => write!(f, "Zero"),
            SourceFamily::GaussianDipole {
                amplitude,
                direction,
            } => f
                .debug_struct("GaussianDipole")
                .field("amplitude", amplitude)
                .field("direction", direction)
                .finish(),
            SourceFamily::Custom { sup_norm, .. } => {
                f.debug_struct("Custom").field("sup_norm", sup_norm).finish()
            }
        }
    }
}

/// Integrability certificate for `(1 + |ξ|^2) |Ŝ(ξ)|`, evaluated on a frequency grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierDecay {
    /// Riemann sum of `(1 + |ξ|^2) |Ŝ|` over the frequency box.
    pub weighted_l1: f64,
    /// Share of that sum coming from the outer half of the box.
    pub tail_fraction: f64,
}

impl FourierDecay {
    pub fn is_integrable(&self) -> bool {
        self.weighted_l1.is_finite() && self.tail_fraction < 1e-6
    }
}

/// Odd source kernel together with cached norms.
#[derive(Debug, Clone)]
pub struct SourceKernel {
    dim: usize,
    family: SourceFamily,
    sup_norm: f64,
    lipschitz: f64,
}

impl SourceKernel {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            family: SourceFamily::Zero,
            sup_norm: 0.0,
            lipschitz: 0.0,
        }
    }

    /// Gaussian-modulated dipole; `direction` is normalized.
    pub fn gaussian_dipole(dim: usize, amplitude: f64, direction: &[f64]) -> Result<Self> {
        if direction.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: direction.len(),
            });
        }
        if !amplitude.is_finite() {
            return Err(Error::invalid("source.amplitude", "must be finite"));
        }
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("source.direction", "must be a nonzero finite vector"));
        }
        let direction: Vec<f64> = direction.iter().map(|v| v / norm).collect();
        let s0 = amplitude.abs();
        Ok(Self {
            dim,
            family: SourceFamily::GaussianDipole {
                amplitude,
                direction,
            },
            // max_t t e^{-t^2/2} is attained at t = 1
            sup_norm: s0 * (-0.5f64).exp(),
            // |∇S| = s0 e^{-|x|^2/2} |v - (v·x) x| <= s0, attained at the origin
            lipschitz: s0,
        })
    }

    pub fn custom(
        dim: usize,
        func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sup_norm: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        if !(sup_norm >= 0.0) || !sup_norm.is_finite() {
            return Err(Error::invalid("source.sup_norm", "must be finite and nonnegative"));
        }
        Ok(Self {
            dim,
            family: SourceFamily::Custom {
                func: Arc::new(func),
                sup_norm,
                lipschitz,
            },
            sup_norm,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &SourceFamily {
        &self.family
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, SourceFamily::Zero)
    }

    /// `‖S‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// `‖S‖_{W^{1,∞}}`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz.max(self.sup_norm)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.family {
            SourceFamily::Zero => 0.0,
            SourceFamily::GaussianDipole {
                amplitude,
                direction,
            } => {
                let mut dot = 0.0;
                let mut r2 = 0.0;
                for (xi, vi) in x.iter().zip(direction) {
                    dot += xi * vi;
                    r2 += xi * xi;
                }
                amplitude * dot * (-0.5 * r2).exp()
            }
            SourceFamily::Custom { func, .. } => func(x),
        }
    }

    /// Magnitude of the unitary Fourier transform, when known in closed form.
    ///
    /// For the dipole `Ŝ(ξ) = -2πi s0 (v·ξ) (2π)^{d/2} exp(-2π²|ξ|²)`.
    pub fn fourier_magnitude(&self, xi: &[f64]) -> Option<f64> {
        match &self.family {
            SourceFamily::Zero => Some(0.0),
            SourceFamily::GaussianDipole {
                amplitude,
                direction,
            } => {
                let dot: f64 = xi.iter().zip(direction).map(|(a, b)| a * b).sum();
                let r2: f64 = xi.iter().map(|a| a * a).sum();
                let gauss = (2.0 * PI).powf(self.dim as f64 / 2.0) * (-2.0 * PI * PI * r2).exp();
                Some(2.0 * PI * amplitude.abs() * dot.abs() * gauss)
            }
            SourceFamily::Custom { .. } => None,
        }
    }

    /// Riemann-sum check that `(1 + |ξ|^2)|Ŝ|` is integrable, on a cube of
    /// half-width `xi_max` with `points` nodes per axis.
    pub fn fourier_decay(&self, xi_max: f64, points: usize) -> Option<FourierDecay> {
        if matches!(self.family, SourceFamily::Custom { .. }) {
            return None;
        }
        let d = self.dim;
        let step = 2.0 * xi_max / points as f64;
        let cell = step.powi(d as i32);
        let mut idx = vec![0usize; d];
        let mut xi = vec![0.0; d];
        let (mut total, mut tail) = (0.0, 0.0);
        loop {
            let mut r2 = 0.0;
            for a in 0..d {
                xi[a] = -xi_max + (idx[a] as f64 + 0.5) * step;
                r2 += xi[a] * xi[a];
            }
            let w = (1.0 + r2) * self.fourier_magnitude(&xi)? * cell;
            total += w;
            if r2.sqrt() > 0.5 * xi_max {
                tail += w;
            }
            let mut a = 0;
            loop {
                if a == d {
                    let tail_fraction = if total > 0.0 { tail / total } else { 0.0 };
                    return Some(FourierDecay {
                        weighted_l1: total,
                        tail_fraction,
                    });
                }
                idx[a] += 1;
                if idx[a] == points {
                    idx[a] = 0;
                    a += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Largest `|S(x) + S(-x)|` over `samples` points drawn from `[-radius, radius]^d`.
    pub fn check_oddness<R: Rng>(&self, rng: &mut R, samples: usize, radius: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut x = vec![0.0; self.dim];
        let mut neg = vec![0.0; self.dim];
        for _ in 0..samples {
            for (xi, ni) in x.iter_mut().zip(neg.iter_mut()) {
                *xi = rng.random_range(-radius..radius);
                *ni = -*xi;
            }
            worst = worst.max((self.eval(&x) + self.eval(&neg)).abs());
        }
        worst
    }
}
