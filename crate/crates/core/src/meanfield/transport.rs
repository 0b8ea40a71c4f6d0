//! Conservative MUSCL finite volumes for `∂_t μ + div(μ u) = 0`.
//!
//! Each axis gets its own minmod-limited reconstruction and upwind face flux, the
//! face velocity being the mean of the two adjacent node velocities. The fluxes of
//! all axes are summed into one update, which keeps the scheme positive when
//! `dt Σ_a max|u_a| / h <= 1/2`.

use rayon::prelude::*;

use crate::grid::GridSpec;

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Time derivative `-div(μ u)` of the semi-discrete scheme. Values outside the grid
/// count as zero.
pub fn transport_rate(spec: &GridSpec, mu: &[f64], velocity: &[Vec<f64>]) -> Vec<f64> {
    let n = spec.n;
    let d = spec.dim;
    let inv_h = 1.0 / spec.h();
    let mut rate = vec![0.0; mu.len()];
    let mut flux = vec![0.0; mu.len()];
    for a in 0..d {
        let stride = spec.stride(a);
        let u = &velocity[a];
        // flux through the face between node i and its upper neighbour along a
        flux.par_iter_mut().enumerate().for_each(|(i, f)| {
            let pos = (i / stride) % n;
            if pos + 1 >= n {
                *f = 0.0;
                return;
            }
            let at = |offset: isize| -> f64 {
                let p = pos as isize + offset;
                if p < 0 || p >= n as isize {
                    0.0
                } else {
                    mu[(i as isize + offset * stride as isize) as usize]
                }
            };
            let (m0, m1) = (mu[i], mu[i + stride]);
            let face = 0.5 * (u[i] + u[i + stride]);
            *f = if face >= 0.0 {
                face * (m0 + 0.5 * minmod(m0 - at(-1), m1 - m0))
            } else {
                face * (m1 - 0.5 * minmod(m1 - m0, at(2) - m1))
            };
        });
        rate.par_iter_mut().enumerate().for_each(|(i, r)| {
            let pos = (i / stride) % n;
            let lower = if pos > 0 { flux[i - stride] } else { 0.0 };
            *r -= (flux[i] - lower) * inv_h;
        });
    }
    rate
}

/// Centred divergence `Σ_a (u_a(x + h e_a) - u_a(x - h e_a)) / 2h` on interior nodes,
/// zero on the outermost layer.
pub fn centred_divergence(spec: &GridSpec, velocity: &[Vec<f64>]) -> Vec<f64> {
    let n = spec.n;
    let inv_2h = 0.5 / spec.h();
    let len = spec.len();
    (0..len)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for (a, u) in velocity.iter().enumerate() {
                let stride = spec.stride(a);
                let pos = (i / stride) % n;
                if pos == 0 || pos + 1 == n {
                    return 0.0;
                }
                acc += (u[i + stride] - u[i - stride]) * inv_2h;
            }
            acc
        })
        .collect()
}

/// One SSP-RK2 (Heun) step of the transport equation with velocities recomputed at
/// each stage by `velocity_of`.
pub fn ssp_rk2_step<F>(spec: &GridSpec, mu: &[f64], dt: f64, mut velocity_of: F) -> crate::Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> crate::Result<Vec<Vec<f64>>>,
{
    let u0 = velocity_of(mu)?;
    let r0 = transport_rate(spec, mu, &u0);
    let stage: Vec<f64> = mu.iter().zip(&r0).map(|(m, r)| m + dt * r).collect();
    let u1 = velocity_of(&stage)?;
    let r1 = transport_rate(spec, &stage, &u1);
    Ok(mu
        .iter()
        .zip(stage.iter().zip(&r1))
        .map(|(m, (s, r))| 0.5 * m + 0.5 * (s + dt * r))
        .collect())
}
