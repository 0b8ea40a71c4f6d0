use proptest::prelude::*;

use sflow::grid::GridSpec;
use sflow::kernels::{Convention, CoulombKernel, CouplingMatrix, KernelSet, SourceKernel};
use sflow::meanfield::{ssp_rk2_step, transport_rate};
use sflow::particles::{rhs_vector, ParticleState};

fn convention(i: usize) -> Convention {
    [Convention::Raw, Convention::Scaled, Convention::Newtonian][i]
}

/// Points in a box, rejected when two come closer than 0.05.
fn cloud(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 3 * n).prop_filter("near collision", move |x| {
        (0..n).all(|i| {
            (i + 1..n).all(|j| (0..3).map(|a| (x[3 * i + a] - x[3 * j + a]).powi(2)).sum::<f64>() > 0.0025)
        })
    })
}

fn kernels(coupling: CouplingMatrix, amplitude: f64) -> KernelSet {
    let source = if amplitude == 0.0 {
        SourceKernel::zero(3)
    } else {
        SourceKernel::gaussian_dipole(3, amplitude, &[0.6, 0.0, 0.8]).unwrap()
    };
    KernelSet::new(CoulombKernel::new(3, Convention::Raw).unwrap(), coupling, source).unwrap()
}

fn derivative(state: &ParticleState, kernels: &KernelSet) -> Vec<f64> {
    let y = state.to_vector();
    let mut dy = vec![0.0; y.len()];
    rhs_vector(kernels, state.n(), &y, &mut dy).unwrap();
    dy
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_central_differences(
        x in prop::collection::vec(-2.0..2.0f64, 3).prop_filter("away from 0", |x| x.iter().map(|v| v * v).sum::<f64>() > 0.04),
        c in 0..3usize,
    ) {
        let v = CoulombKernel::new(3, convention(c)).unwrap();
        let g = v.grad(&x).unwrap();
        let h = 1e-5;
        for a in 0..3 {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[a] += h;
            m[a] -= h;
            let fd = (v.eval(&p).unwrap() - v.eval(&m).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[a]).abs() <= 1e-6 * (1.0 + g[a].abs()), "axis {a}: {fd} vs {}", g[a]);
        }
    }

    #[test]
    fn interaction_energy_ignores_translation_and_order(x in cloud(6), shift in prop::collection::vec(-3.0..3.0f64, 3)) {
        let v = CoulombKernel::new(3, Convention::Raw).unwrap();
        let w: Vec<f64> = (0..6).map(|i| 0.5 + 0.2 * i as f64).collect();
        let e = ParticleState::new(3, x.clone(), w.clone(), 0.0).unwrap().interaction_energy(&v).unwrap();

        let moved: Vec<f64> = x.iter().enumerate().map(|(k, p)| p + shift[k % 3]).collect();
        let e_moved = ParticleState::new(3, moved, w.clone(), 0.0).unwrap().interaction_energy(&v).unwrap();
        prop_assert!((e - e_moved).abs() <= 1e-11 * e.abs());

        let (rx, rw): (Vec<f64>, Vec<f64>) = (
            (0..6).rev().flat_map(|i| x[3 * i..3 * i + 3].to_vec()).collect(),
            w.iter().rev().copied().collect(),
        );
        let e_rev = ParticleState::new(3, rx, rw, 0.0).unwrap().interaction_energy(&v).unwrap();
        prop_assert!((e - e_rev).abs() <= 1e-11 * e.abs());
    }

    #[test]
    fn pair_forces_cancel_and_odd_sources_keep_total_weight(x in cloud(7), amplitude in 0.1..2.0f64, rotate: bool) {
        let coupling = if rotate { CouplingMatrix::rotation(3) } else { CouplingMatrix::Identity };
        let ks = kernels(coupling, amplitude);
        let w: Vec<f64> = (0..7).map(|i| 0.7 + 0.1 * i as f64).collect();
        let state = ParticleState::new(3, x, w.clone(), 0.0).unwrap();
        let dy = derivative(&state, &ks);
        let (dx, dm) = dy.split_at(21);
        let scale: f64 = dx.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        for a in 0..3 {
            let momentum: f64 = (0..7).map(|i| w[i] * dx[3 * i + a]).sum();
            prop_assert!(momentum.abs() <= 1e-12 * scale, "axis {a}: {momentum}");
        }
        let total: f64 = dm.iter().sum();
        prop_assert!(total.abs() <= 1e-12 * (1.0 + dm.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn rotation_moves_along_level_sets(x in cloud(7)) {
        // with an antisymmetric coupling and no source dH/dt = Σ_i ∇_i H · ẋ_i = 0
        let ks = kernels(CouplingMatrix::rotation(3), 0.0);
        let state = ParticleState::with_unit_weights(3, x.clone()).unwrap();
        let dy = derivative(&state, &ks);
        let v = CoulombKernel::new(3, Convention::Raw).unwrap();
        let mut power = 0.0;
        let mut scale = 0.0;
        for i in 0..7 {
            for j in (0..7).filter(|&j| j != i) {
                let r: Vec<f64> = (0..3).map(|a| x[3 * i + a] - x[3 * j + a]).collect();
                let g = v.grad(&r).unwrap();
                for a in 0..3 {
                    power += g[a] * dy[3 * i + a];
                    scale += (g[a] * dy[3 * i + a]).abs();
                }
            }
        }
        prop_assert!(power.abs() <= 1e-12 * scale.max(1e-300), "{power} vs {scale}");
    }

    #[test]
    fn transport_conserves_mass_and_stays_positive(
        mu in prop::collection::vec(0.0..1.0f64, 12 * 12),
        u in prop::collection::vec(-1.0..1.0f64, 2 * 12 * 12),
        courant in 0.05..0.5f64,
    ) {
        let spec = GridSpec::new(2, 12, 1.0).unwrap();
        let velocity = vec![u[..144].to_vec(), u[144..].to_vec()];
        let max_sum: f64 = velocity.iter().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).sum();
        let dt = courant * spec.h() / max_sum.max(1e-12);

        let rate = transport_rate(&spec, &mu, &velocity);
        prop_assert!(rate.iter().sum::<f64>().abs() <= 1e-12 * (1.0 + rate.iter().map(|r| r.abs()).sum::<f64>()));

        let next = ssp_rk2_step(&spec, &mu, dt, |_| Ok(velocity.clone())).unwrap();
        let (m0, m1): (f64, f64) = (mu.iter().sum(), next.iter().sum());
        prop_assert!((m0 - m1).abs() <= 1e-12 * m0.max(1.0));
        let low = next.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(low >= -1e-14, "min {low}");
    }
}
