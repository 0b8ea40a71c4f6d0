use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::CoulombKernel;

/// Positions and weights of `N` agents at time `t`.
///
/// Positions are stored row-major (`x[i * d + a]`). Weights satisfy `m_i >= 0` and
/// `(1/N) Σ m_i = 1`; positions are pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    dim: usize,
    t: f64,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

/// Tolerance on the mean weight accepted by [`ParticleState::new`].
pub const MEAN_WEIGHT_TOL: f64 = 1e-10;

impl ParticleState {
    pub fn new(dim: usize, positions: Vec<f64>, weights: Vec<f64>, t: f64) -> Result<Self> {
        let state = Self::unchecked(dim, positions, weights, t)?;
        state.validate()?;
        Ok(state)
    }

    /// Shape checks only; used for integrator output where the invariants are
    /// monitored rather than enforced.
    pub fn unchecked(dim: usize, positions: Vec<f64>, weights: Vec<f64>, t: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("particles.dim", "must be positive"));
        }
        if positions.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: positions.len(),
            });
        }
        Ok(Self {
            dim,
            t,
            positions,
            weights,
        })
    }

    /// Unit weights.
    pub fn with_unit_weights(dim: usize, positions: Vec<f64>) -> Result<Self> {
        let n = positions.len() / dim.max(1);
        Self::new(dim, positions, vec![1.0; n], 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.weights.iter().position(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid(
                format!("weights[{i}]"),
                format!("must be finite and nonnegative, got {}", self.weights[i]),
            ));
        }
        if let Some(i) = self.positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("positions[{}]", i / self.dim), "must be finite"));
        }
        if self.n() > 0 && (self.mean_weight() - 1.0).abs() > MEAN_WEIGHT_TOL {
            return Err(Error::invalid(
                "weights",
                format!("mean weight must be 1, got {}", self.mean_weight()),
            ));
        }
        if let Some((i, j)) = self.find_duplicate() {
            return Err(Error::Collision { i, j });
        }
        Ok(())
    }

    /// First pair of bitwise-identical positions, if any.
    pub fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(self.n());
        for i in 0..self.n() {
            // +0.0 and -0.0 are the same point
            let key: Vec<u64> = self.position(i).iter().map(|v| (v + 0.0).to_bits()).collect();
            if let Some(&j) = seen.get(&key) {
                return Some((j, i));
            }
            seen.insert(key, i);
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn mean_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.n() as f64
    }

    /// `min_{i≠j} |x_i - x_j|`.
    pub fn min_separation(&self) -> Result<f64> {
        let n = self.n();
        if n < 2 {
            return Err(Error::invalid("particles.n", "min separation needs at least two particles"));
        }
        let d = self.dim;
        let min_r2 = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = self.position(i);
                let mut best = f64::INFINITY;
                for j in i + 1..n {
                    let xj = &self.positions[j * d..(j + 1) * d];
                    let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                    best = best.min(r2);
                }
                best
            })
            .reduce(|| f64::INFINITY, f64::min);
        Ok(min_r2.sqrt())
    }

    /// Weighted interaction energy `Σ_{i≠j} m_i m_j V(x_i - x_j)`.
    pub fn interaction_energy(&self, kernel: &CoulombKernel) -> Result<f64> {
        if kernel.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                got: self.dim,
            });
        }
        let n = self.n();
        let d = self.dim;
        let rows: Result<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = self.position(i);
                let mut acc = 0.0;
                for j in i + 1..n {
                    let xj = &self.positions[j * d..(j + 1) * d];
                    let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                    if r2 == 0.0 {
                        return Err(Error::Collision { i, j });
                    }
                    acc += self.weights[j] * kernel.from_r2(r2);
                }
                Ok(2.0 * self.weights[i] * acc)
            })
            .collect();
        Ok(rows?.iter().sum())
    }

    /// Flattened ODE vector `[positions, weights]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut y = self.positions.clone();
        y.extend_from_slice(&self.weights);
        y
    }

    pub fn from_vector(dim: usize, n: usize, y: &[f64], t: f64) -> Self {
        Self {
            dim,
            t,
            positions: y[..n * dim].to_vec(),
            weights: y[n * dim..].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Convention;

    fn raw3() -> CoulombKernel {
        CoulombKernel::new(3, Convention::Raw).unwrap()
    }

    #[test]
    fn energy_examples() {
        let s = ParticleState::with_unit_weights(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert!((s.interaction_energy(&raw3()).unwrap() - 1.0).abs() < 1e-15);
        let one = ParticleState::with_unit_weights(3, vec![0.3, 0.1, 0.0]).unwrap();
        assert_eq!(one.interaction_energy(&raw3()).unwrap(), 0.0);
    }

    #[test]
    fn doubling_weights_quadruples_energy() {
        let pos = vec![0.0, 0.0, 0.0, 1.0, 0.5, 0.0, -0.3, 0.2, 0.9];
        let s = ParticleState::unchecked(3, pos.clone(), vec![1.0, 0.5, 1.5], 0.0).unwrap();
        let s2 = ParticleState::unchecked(3, pos, vec![2.0, 1.0, 3.0], 0.0).unwrap();
        let (a, b) = (s.interaction_energy(&raw3()).unwrap(), s2.interaction_energy(&raw3()).unwrap());
        assert!((b - 4.0 * a).abs() < 1e-13 * b);
    }

    #[test]
    fn separation_examples() {
        let s = ParticleState::with_unit_weights(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.min_separation().unwrap(), 1.0);
        let c = ParticleState::with_unit_weights(3, vec![0.0, 0.0, 0.0, 1e-3, 0.0, 0.0, 5.0, 0.0, 0.0, 5.0, 1.0, 0.0]).unwrap();
        assert!((c.min_separation().unwrap() - 1e-3).abs() < 1e-18);
        let one = ParticleState::with_unit_weights(3, vec![0.0; 3]).unwrap();
        assert!(one.min_separation().is_err());
    }

    #[test]
    fn invariants_are_checked() {
        assert!(matches!(
            ParticleState::with_unit_weights(3, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            Err(Error::Collision { i: 0, j: 1 })
        ));
        let bad = ParticleState::new(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], vec![2.5, -0.5], 0.0);
        assert!(matches!(bad, Err(Error::InvalidParameter { ref name, .. }) if name == "weights[1]"));
        let mean = ParticleState::new(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], vec![1.0, 2.0], 0.0);
        assert!(mean.is_err());
    }
}
