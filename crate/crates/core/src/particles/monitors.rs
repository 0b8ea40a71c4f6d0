use serde::Serialize;

use super::state::ParticleState;

/// Monitor values recorded with each trajectory snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub mean_weight: f64,
    pub max_weight: f64,
    pub min_weight: f64,
    pub min_separation: f64,
    pub interaction_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMonitors {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

pub fn weight_monitors(state: &ParticleState) -> WeightMonitors {
    let w = state.weights();
    WeightMonitors {
        mean: state.mean_weight(),
        max: w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min: w.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

/// Growth envelope of the interaction energy, `e^{2‖S‖_∞ t} H_N(0)`.
pub fn energy_envelope(energy0: f64, source_sup: f64, t: f64) -> f64 {
    (2.0 * source_sup * t).exp() * energy0
}

/// Separation lower bound `min{1, (e^{2‖S‖_∞ T} H_N(0))^{-1}}^{1/k}` on `[0, T]`.
pub fn separation_lower_bound(energy0: f64, source_sup: f64, horizon: f64, k: usize) -> f64 {
    let inv = 1.0 / energy_envelope(energy0, source_sup, horizon);
    inv.min(1.0).powf(1.0 / k as f64)
}

/// Logged (not asserted) weight envelope `M e^{‖S‖_∞ max_j m_j(0) t}`.
pub fn weight_envelope(initial_max: f64, source_sup: f64, t: f64) -> f64 {
    initial_max * (source_sup * initial_max * t).exp()
}
