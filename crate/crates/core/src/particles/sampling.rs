use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDensity;

use super::state::ParticleState;

/// How particle weights are assigned when sampling a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Positions drawn from μ, all weights 1.
    #[default]
    Uniform,
    /// Positions drawn uniformly over the support cells, weights `∝ μ(cell)`
    /// renormalized to mean 1.
    IidImportance,
}

/// Deterministic generator for one `(N, seed)` experiment cell: the seed keys the
/// ChaCha20 key and `N` selects the stream, so cells never share random numbers.
pub fn cell_rng(n: usize, seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

/// Draws `N` particles from a grid density by inverse CDF over cells plus uniform
/// jitter inside the cell. Bitwise-duplicate positions are re-drawn.
pub fn sample_from_density(mu: &GridDensity, n: usize, seed: u64, mode: WeightMode) -> Result<ParticleState> {
    if n == 0 {
        return Err(Error::invalid("particles.n", "must be at least 1"));
    }
    let spec = *mu.spec();
    let d = spec.dim;
    let h = spec.h();
    let mut rng = cell_rng(n, seed);

    let support: Vec<usize> = mu
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut cdf = Vec::with_capacity(support.len());
    let mut acc = 0.0;
    for &i in &support {
        acc += match mode {
            WeightMode::Uniform => mu.values()[i],
            WeightMode::IidImportance => 1.0,
        };
        cdf.push(acc);
    }
    let total = acc;

    let budget = 100 * n + 1000;
    let mut attempts = 0;
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(n);
    let mut positions = Vec::with_capacity(n * d);
    let mut cells = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    while cells.len() < n {
        attempts += 1;
        if attempts > budget {
            return Err(Error::SamplingBudget { attempts: budget });
        }
        let u = rng.random::<f64>() * total;
        let k = cdf.partition_point(|c| *c <= u).min(support.len() - 1);
        let cell = support[k];
        spec.position(cell, &mut x);
        for v in x.iter_mut() {
            *v += (rng.random::<f64>() - 0.5) * h;
        }
        let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
        if !seen.insert(key) {
            continue;
        }
        positions.extend_from_slice(&x);
        cells.push(cell);
    }

    let weights = match mode {
        WeightMode::Uniform => vec![1.0; n],
        WeightMode::IidImportance => {
            let raw: Vec<f64> = cells.iter().map(|&c| mu.values()[c]).collect();
            let mean = raw.iter().sum::<f64>() / n as f64;
            raw.iter().map(|w| w / mean).collect()
        }
    };
    let mut state = ParticleState::unchecked(d, positions, weights, mu.time())?;
    if mode == WeightMode::IidImportance {
        // exact unit mean after rounding
        let mean = state.mean_weight();
        let w: Vec<f64> = state.weights().iter().map(|v| v / mean).collect();
        state = ParticleState::unchecked(d, state.positions().to_vec(), w, mu.time())?;
    }
    state.validate()?;
    Ok(state)
}
