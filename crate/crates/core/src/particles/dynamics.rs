use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSet;

use super::state::ParticleState;

/// Above this many particles the pair sums use compensated accumulation.
pub const COMPENSATION_THRESHOLD: usize = 10_000;

/// Running sum, optionally Kahan-compensated.
#[derive(Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    #[inline]
    fn add<const COMPENSATED: bool>(&mut self, v: f64) {
        if COMPENSATED {
            let y = v - self.carry;
            let t = self.sum + y;
            self.carry = (t - self.sum) - y;
            self.sum = t;
        } else {
            self.sum += v;
        }
    }
}

/// Right-hand side of the weighted particle system on the flat vector
/// `y = [x_1, ..., x_N, m_1, ..., m_N]`:
///
/// `ẋ_i = -(1/N) Σ_{j≠i} m_j J∇V(x_i - x_j)`, `ṁ_i = (1/N) Σ_j m_i m_j S(x_i - x_j)`.
///
/// Returns the smallest squared pair distance seen, so callers can watch the
/// separation without a second O(N²) pass.
pub fn rhs_vector(kernels: &KernelSet, n: usize, y: &[f64], dy: &mut [f64]) -> Result<f64> {
    if n > COMPENSATION_THRESHOLD {
        rhs_impl::<true>(kernels, n, y, dy)
    } else {
        rhs_impl::<false>(kernels, n, y, dy)
    }
}

fn rhs_impl<const COMPENSATED: bool>(
    kernels: &KernelSet,
    n: usize,
    y: &[f64],
    dy: &mut [f64],
) -> Result<f64> {
    let d = kernels.dim();
    debug_assert_eq!(y.len(), n * (d + 1));
    let (pos, weights) = y.split_at(n * d);
    let (dpos, dweights) = dy.split_at_mut(n * d);
    let inv_n = 1.0 / n as f64;
    let coulomb = &kernels.coulomb;
    let source = &kernels.source;
    let with_source = !source.is_zero();

    let results: Vec<(f64, f64, Option<usize>)> = dpos
        .par_chunks_mut(d)
        .enumerate()
        .map(|(i, out)| {
            let xi = &pos[i * d..(i + 1) * d];
            let mut force = vec![Accumulator::default(); d];
            let mut exchange = Accumulator::default();
            let mut diff = vec![0.0; d];
            let mut min_r2 = f64::INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let xj = &pos[j * d..(j + 1) * d];
                let mut r2 = 0.0;
                for a in 0..d {
                    diff[a] = xi[a] - xj[a];
                    r2 += diff[a] * diff[a];
                }
                if r2 == 0.0 {
                    return (0.0, 0.0, Some(j));
                }
                min_r2 = min_r2.min(r2);
                let mj = weights[j];
                let g = mj * coulomb.grad_factor(r2);
                for a in 0..d {
                    force[a].add::<COMPENSATED>(g * diff[a]);
                }
                if with_source {
                    exchange.add::<COMPENSATED>(mj * source.eval(&diff));
                }
            }
            let grad: Vec<f64> = force.iter().map(|f| f.sum).collect();
            kernels.coupling.apply_into(&grad, out);
            for o in out.iter_mut() {
                *o *= -inv_n;
            }
            (inv_n * weights[i] * exchange.sum, min_r2, None)
        })
        .collect();

    let mut min_r2 = f64::INFINITY;
    for (i, (dm, r2, hit)) in results.into_iter().enumerate() {
        if let Some(j) = hit {
            return Err(Error::Collision { i: i.min(j), j: i.max(j) });
        }
        dweights[i] = dm;
        min_r2 = min_r2.min(r2);
    }
    Ok(min_r2)
}

/// Time derivatives of positions and weights for a state.
pub fn rhs(state: &ParticleState, kernels: &KernelSet) -> Result<(Vec<f64>, Vec<f64>)> {
    if state.dim() != kernels.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernels.dim(),
            got: state.dim(),
        });
    }
    let n = state.n();
    let y = state.to_vector();
    let mut dy = vec![0.0; y.len()];
    rhs_vector(kernels, n, &y, &mut dy)?;
    let dm = dy.split_off(n * state.dim());
    Ok((dy, dm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Convention, CoulombKernel, CouplingMatrix, SourceKernel};

    fn kernels(source: SourceKernel, coupling: CouplingMatrix) -> KernelSet {
        KernelSet::new(CoulombKernel::new(3, Convention::Raw).unwrap(), coupling, source).unwrap()
    }

    #[test]
    fn two_body_example() {
        let k = kernels(SourceKernel::zero(3), CouplingMatrix::Identity);
        let s = ParticleState::with_unit_weights(3, vec![0.5, 0.0, 0.0, -0.5, 0.0, 0.0]).unwrap();
        let (dx, dm) = rhs(&s, &k).unwrap();
        let want = [0.5, 0.0, 0.0, -0.5, 0.0, 0.0];
        for (a, b) in dx.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(dm, vec![0.0, 0.0]);
    }

    #[test]
    fn odd_source_conserves_total_weight_for_pairs() {
        let src = SourceKernel::gaussian_dipole(3, 1.3, &[0.2, 1.0, 0.0]).unwrap();
        let k = kernels(src, CouplingMatrix::rotation(3));
        let s = ParticleState::new(3, vec![0.3, -0.2, 0.1, -0.4, 0.5, 0.0], vec![0.7, 1.3], 0.0).unwrap();
        let (_, dm) = rhs(&s, &k).unwrap();
        assert!((dm[0] + dm[1]).abs() < 1e-16);
        assert!(dm[0] != 0.0);
    }

    #[test]
    fn collision_is_reported() {
        let k = kernels(SourceKernel::zero(3), CouplingMatrix::Identity);
        let s = ParticleState::unchecked(3, vec![0.1, 0.0, 0.0, 0.1, 0.0, 0.0], vec![1.0, 1.0], 0.0).unwrap();
        assert!(matches!(rhs(&s, &k), Err(Error::Collision { i: 0, j: 1 })));
    }

    #[test]
    fn compensated_path_agrees() {
        let k = kernels(
            SourceKernel::gaussian_dipole(3, 1.0, &[1.0, 0.0, 0.0]).unwrap(),
            CouplingMatrix::Identity,
        );
        let n = 50;
        let y: Vec<f64> = (0..n * 3)
            .map(|i| ((i * 37 % 101) as f64 / 101.0 - 0.5) * (1.0 + i as f64 * 1e-3))
            .chain(std::iter::repeat(1.0).take(n))
            .collect();
        let mut a = vec![0.0; y.len()];
        let mut b = vec![0.0; y.len()];
        rhs_impl::<false>(&k, n, &y, &mut a).unwrap();
        rhs_impl::<true>(&k, n, &y, &mut b).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}
