use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{lp_norm, GridDensity, GridSpec};

/// Quadrature norms of a density at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormMonitors {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// `‖μ‖_2 + ‖∇μ‖_2` with centred differences.
    pub w12: f64,
    /// `‖μ‖_4 + ‖∇μ‖_4`.
    pub w14: f64,
    pub support_radius: f64,
}

/// Euclidean norm of the centred-difference gradient at every node (zero on the
/// outermost layer).
pub fn gradient_magnitude(spec: &GridSpec, values: &[f64]) -> Vec<f64> {
    let n = spec.n;
    let inv_2h = 0.5 / spec.h();
    (0..values.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for a in 0..spec.dim {
                let stride = spec.stride(a);
                let pos = (i / stride) % n;
                if pos == 0 || pos + 1 == n {
                    return 0.0;
                }
                let g = (values[i + stride] - values[i - stride]) * inv_2h;
                acc += g * g;
            }
            acc.sqrt()
        })
        .collect()
}

/// Radius of the smallest origin-centred ball containing every node where `μ` exceeds
/// `threshold`; `None` picks `1e-12 max μ`.
pub fn support_radius(mu: &GridDensity, threshold: Option<f64>) -> f64 {
    let threshold = threshold.unwrap_or(1e-12 * mu.max());
    let spec = mu.spec();
    let mut x = vec![0.0; spec.dim];
    let mut r2max: f64 = 0.0;
    for (i, v) in mu.values().iter().enumerate() {
        if *v > threshold {
            spec.position(i, &mut x);
            r2max = r2max.max(x.iter().map(|c| c * c).sum());
        }
    }
    r2max.sqrt()
}

pub fn norm_monitors(mu: &GridDensity) -> NormMonitors {
    let spec = mu.spec();
    let dv = spec.cell_volume();
    let grad = gradient_magnitude(spec, mu.values());
    NormMonitors {
        t: mu.time(),
        mass: mu.mass(),
        l1: mu.lp_norm(1.0),
        l2: mu.lp_norm(2.0),
        linf: mu.lp_norm(f64::INFINITY),
        w12: mu.lp_norm(2.0) + lp_norm(&grad, dv, 2.0),
        w14: mu.lp_norm(4.0) + lp_norm(&grad, dv, 4.0),
        support_radius: support_radius(mu, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cube_norms() {
        // unit cube [-0.5, 0.5)^3 on a box of half-width 1 with 16 nodes per axis
        let spec = GridSpec::new(3, 16, 1.0).unwrap();
        let mu = GridDensity::from_fn(spec, |x| if x.iter().all(|c| *c >= -0.5 && *c < 0.5) { 1.0 } else { 0.0 })
            .unwrap();
        let m = norm_monitors(&mu);
        assert!((m.l1 - 1.0).abs() < 1e-12 && (m.linf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_support() {
        let spec = GridSpec::new(3, 16, 1.0).unwrap();
        // node (8, 8, 12) sits at (0, 0, 0.5)
        let mu = GridDensity::one_hot(spec, spec.flatten(&[8, 8, 12])).unwrap();
        assert!((support_radius(&mu, None) - 0.5).abs() <= spec.h());
    }
}
