use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sflow::diagnostics::*;
use sflow::grid::{Bump, GridDensity, GridSpec};
use sflow::kernels::{Convention, CoulombKernel, CouplingMatrix, KernelSet, SourceKernel, TruncationCutoff};
use sflow::meanfield::{FieldCache, PdeConfig};
use sflow::particles::{sample_from_density, ParticleState, WeightMode};
use sflow::special::median;
use sflow::Error;

fn newtonian() -> CoulombKernel {
    CoulombKernel::new(3, Convention::Newtonian).unwrap()
}

fn dipole() -> SourceKernel {
    SourceKernel::gaussian_dipole(3, 1.0, &[1.0, 0.0, 0.0]).unwrap()
}

fn bump(spec: GridSpec, radius: f64, offset: f64) -> GridDensity {
    GridDensity::bump(spec, Bump { radius, center_offset: offset }).unwrap()
}

fn difference(a: &GridDensity, b: &GridDensity) -> Vec<f64> {
    a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect()
}

fn uniform_cube(spec: GridSpec, half: f64) -> GridDensity {
    GridDensity::from_fn(spec, |x| if x.iter().all(|v| v.abs() < half) { 1.0 } else { 0.0 }).unwrap()
}

#[test]
fn plancherel_identity_for_offset_bumps() {
    let spec = GridSpec::new(3, 64, 2.0).unwrap();
    let kernel = newtonian();
    let a = bump(spec, 1.0, 0.2);
    let b = bump(spec, 0.8, -0.3);
    let spectral = hminus1_norm_sq(&a, &b, &kernel).unwrap();
    let op = PotentialOperator::new(spec, &kernel, QuadratureRule::default()).unwrap();
    let physical = op.quadratic_form(&difference(&a, &b)).unwrap();
    assert!(spectral > 0.0);
    assert!((spectral - physical).abs() < 1e-4 * spectral, "{spectral} {physical}");
}

#[test]
fn hminus1_trivial_cases() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let kernel = newtonian();
    let a = bump(spec, 1.0, 0.0);
    assert_eq!(hminus1_norm_sq(&a, &a, &kernel).unwrap(), 0.0);
    // translating both arguments by whole cells leaves the distance unchanged
    let h = spec.h();
    let d0 = hminus1_norm_sq(&bump(spec, 0.7, 0.0), &bump(spec, 0.7, h), &kernel).unwrap();
    let d1 = hminus1_norm_sq(&bump(spec, 0.7, 3.0 * h), &bump(spec, 0.7, 4.0 * h), &kernel).unwrap();
    assert!((d0 - d1).abs() < 1e-5 * d0, "{d0} {d1}");
    let uneven = GridDensity::new(spec, a.values().iter().map(|v| 1.01 * v).collect(), 0.0);
    assert!(uneven.is_err());
}

#[test]
fn continuum_term_matches_direct_double_sum_at_n32() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let kernel = newtonian();
    let mu = bump(spec, 1.0, 0.0);
    let rule = QuadratureRule {
        singular_cell: SingularCellRule::CellAverage,
        interpolation: Interpolation::Linear,
    };
    let op = PotentialOperator::new(spec, &kernel, rule).unwrap();
    let fast = ContinuumPotential::new(&mu, &op).unwrap().continuum_term();

    let dv = spec.cell_volume();
    let nodes: Vec<(Vec<f64>, f64)> = (0..spec.len())
        .filter(|&i| mu.values()[i] > 0.0)
        .map(|i| {
            let mut x = vec![0.0; 3];
            spec.position(i, &mut x);
            (x, mu.values()[i])
        })
        .collect();
    let origin = kernel.cell_average(spec.h());
    let mut direct = 0.0;
    for (x, m) in &nodes {
        for (y, w) in &nodes {
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            direct += m * w * if r2 == 0.0 { origin } else { kernel.from_r2(r2) };
        }
    }
    direct *= dv * dv;
    assert!((fast - direct).abs() < 1e-6 * direct, "{fast} {direct}");
    assert!(fast > 0.0);
}

#[test]
fn empty_cloud_gives_the_continuum_term() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let empty = ParticleState::new(3, vec![], vec![], 0.0).unwrap();
    let e = modulated_energy(&empty, &mu, &newtonian()).unwrap();
    assert_eq!(e.self_term, 0.0);
    assert_eq!(e.cross_term, 0.0);
    assert!(e.continuum_term > 0.0);
    assert_eq!(e.total, e.continuum_term);
}

#[test]
fn particle_outside_the_box_is_rejected() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let state = ParticleState::with_unit_weights(3, vec![0.0, 0.0, 0.0, 2.5, 0.0, 0.0]).unwrap();
    let err = modulated_energy(&state, &mu, &newtonian()).unwrap_err();
    assert!(matches!(err, Error::OutsideBox { index: 1 }));
}

/// Median `|𝓔_N|` over seeds for i.i.d. samples of `μ`.
fn iid_energy(mu: &GridDensity, potential: &ContinuumPotential, n: usize, seeds: u64) -> f64 {
    let kernel = newtonian();
    let values: Vec<f64> = (0..seeds)
        .map(|seed| {
            let state = sample_from_density(mu, n, seed, WeightMode::Uniform).unwrap();
            modulated_energy_with(&state, potential, &kernel).unwrap().total.abs()
        })
        .collect();
    median(&values)
}

#[test]
fn iid_modulated_energy_decreases_with_n() {
    let spec = GridSpec::new(3, 32, 1.0).unwrap();
    let mu = uniform_cube(spec, 0.5);
    let op = PotentialOperator::new(spec, &newtonian(), QuadratureRule::default()).unwrap();
    let potential = ContinuumPotential::new(&mu, &op).unwrap();
    let e: Vec<f64> = [512, 1024, 2048].iter().map(|&n| iid_energy(&mu, &potential, n, 64)).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}

#[test]
fn truncated_split_limits() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let kernel = newtonian();
    let state = sample_from_density(&mu, 200, 4, WeightMode::Uniform).unwrap();
    let full = modulated_energy(&state, &mu, &kernel).unwrap();
    let sep = state.min_separation().unwrap();

    // (1 - ζ_δ) vanishes beyond 2δ
    let tiny = truncated_offdiag_energy(&state, &mu, &kernel, &TruncationCutoff::new(0.49 * sep).unwrap()).unwrap();
    assert_eq!(tiny.near_diag, 0.0);
    assert!((tiny.far_field - full.total).abs() < 1e-12 * full.self_term);

    let huge = truncated_offdiag_energy(&state, &mu, &kernel, &TruncationCutoff::new(10.0).unwrap()).unwrap();
    assert!((huge.near_diag - full.self_term).abs() <= 1e-12 * full.self_term);

    // fewer pairs are weighted as δ shrinks
    let mut last = f64::INFINITY;
    for delta in [1.0, 0.5, 0.25, 0.1, 0.05, 0.01] {
        let s = truncated_offdiag_energy(&state, &mu, &kernel, &TruncationCutoff::new(delta).unwrap()).unwrap();
        assert!(s.near_diag >= 0.0 && s.near_diag <= last, "{delta}: {}", s.near_diag);
        assert!((s.near_diag + s.far_field - s.total).abs() < 1e-12);
        last = s.near_diag;
    }
}

#[test]
fn near_diagonal_energy_decreases_with_n() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let kernel = newtonian();
    let op = PotentialOperator::new(spec, &kernel, QuadratureRule::default()).unwrap();
    let potential = ContinuumPotential::new(&mu, &op).unwrap();
    let medians: Vec<f64> = [512usize, 1024, 2048]
        .iter()
        .map(|&n| {
            let cutoff = TruncationCutoff::new((n as f64).powf(-1.0 / 3.0)).unwrap();
            let v: Vec<f64> = (0..8)
                .map(|seed| {
                    let state = sample_from_density(&mu, n, seed, WeightMode::Uniform).unwrap();
                    truncated_offdiag_energy_with(&state, &potential, &kernel, &cutoff).unwrap().near_diag
                })
                .collect();
            median(&v)
        })
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn w1_single_particle_against_one_hot() {
    let spec = GridSpec::new(3, 16, 1.0).unwrap();
    let target = spec.flatten(&[9, 5, 10]);
    let mu = GridDensity::one_hot(spec, target).unwrap();
    let mut b = vec![0.0; 3];
    spec.position(target, &mut b);
    let a = [0.1, 0.3, -0.2];
    let state = ParticleState::with_unit_weights(3, a.to_vec()).unwrap();
    let w = w1_distance(&state, &mu, 10).unwrap();
    let exact = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    assert!((w.distance - exact).abs() < 1e-12);
    assert!((w.uncertainty - spec.h() * 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn w1_of_identical_clouds_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..3 * 50).map(|_| rng.random::<f64>()).collect();
    let m: Vec<f64> = (0..50).map(|_| rng.random::<f64>() + 0.1).collect();
    assert!(w1_discrete(3, &x, &m, &x, &m).unwrap().abs() < 1e-14);
}

#[test]
fn w1_cost_guard() {
    let spec = GridSpec::new(3, 16, 1.0).unwrap();
    let mu = bump(spec, 0.5, 0.0);
    let state = sample_from_density(&mu, 2000, 1, WeightMode::Uniform).unwrap();
    let err = w1_distance(&state, &mu, 6000).unwrap_err();
    assert!(matches!(err, Error::CostGuard { .. }));
    assert!(err.to_string().contains("sliced"));
}

#[test]
fn w1_decreases_with_n() {
    let spec = GridSpec::new(3, 64, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let atoms = QuantizedDensity::new(&mu, 2048).unwrap();
    let clock = std::time::Instant::now();
    let medians: Vec<f64> = [512usize, 1024, 2048, 4096]
        .iter()
        .map(|&n| {
            let v: Vec<f64> = (0..3)
                .map(|seed| {
                    let state = sample_from_density(&mu, n, seed, WeightMode::Uniform).unwrap();
                    w1_to_quantized(&state, &atoms, spec.half_width).unwrap().distance
                })
                .collect();
            median(&v)
        })
        .collect();
    eprintln!("W1 medians {medians:?} with {} atoms in {:?}", atoms.len(), clock.elapsed());
    assert!(medians.windows(2).all(|w| w[0] > w[1]), "{medians:?}");
}

#[test]
fn quantization_coarsens_until_the_budget_fits() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let fine = QuantizedDensity::new(&mu, 100_000).unwrap();
    assert_eq!(fine.block, 1);
    let coarse = QuantizedDensity::new(&mu, 300).unwrap();
    assert!(coarse.block > 1 && coarse.len() <= 300);
    assert!((coarse.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // barycentres keep the mean
    let mean: f64 = coarse.positions.chunks(3).zip(&coarse.masses).map(|(x, m)| x[0] * m).sum();
    assert!(mean.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn w1_is_a_metric_on_random_triples(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cloud = |n: usize| {
            let x: Vec<f64> = (0..3 * n).map(|_| rng.random::<f64>()).collect();
            let m: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            (x, m)
        };
        let (a, b, c) = (cloud(17), cloud(23), cloud(11));
        let ab = w1_discrete(3, &a.0, &a.1, &b.0, &b.1).unwrap();
        let ba = w1_discrete(3, &b.0, &b.1, &a.0, &a.1).unwrap();
        let bc = w1_discrete(3, &b.0, &b.1, &c.0, &c.1).unwrap();
        let ac = w1_discrete(3, &a.0, &a.1, &c.0, &c.1).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10);
        prop_assert!(ac <= ab + bc + 1e-8);
        prop_assert!(ab > 0.0);
    }
}

#[test]
fn lipschitz_ratio_cases() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let nu = bump(spec, 1.0, spec.h());
    let cache = FieldCache::new(spec, &newtonian(), &dipole(), 4.0 * spec.h()).unwrap();
    let r = h_lipschitz_ratio(&mu, &nu, &cache).unwrap();
    assert!(r.is_finite() && r > 0.0, "{r}");
    let zero = FieldCache::new(spec, &newtonian(), &SourceKernel::zero(3), 4.0 * spec.h()).unwrap();
    assert_eq!(h_lipschitz_ratio(&mu, &nu, &zero).unwrap(), 0.0);
    let err = h_lipschitz_ratio(&mu, &mu, &cache).unwrap_err();
    assert!(matches!(err, Error::DensitiesCoincide { .. }));
    // the reaction term integrates to zero for odd S
    let h = h_source(&mu, &cache);
    assert!(h.iter().sum::<f64>().abs() * spec.cell_volume() < 1e-14);
}

#[test]
fn coercivity_probe_cases() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let kernel = newtonian();
    let mu = bump(spec, 1.0, 0.0);
    // constant on both supports, smoothly cut off well inside the box
    let phi = spec.sample(|x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= 1.2 {
            1.0
        } else {
            sflow::grid::bump_profile(((r - 1.2) / 0.4).powi(2).min(1.0)) * std::f64::consts::E
        }
    });
    let state = sample_from_density(&mu, 300, 2, WeightMode::Uniform).unwrap();
    let p = coercivity_probe(&state, &mu, &phi, &kernel).unwrap();
    assert!(p.lhs.abs() < 1e-8, "{}", p.lhs);
    assert!(p.lipschitz_norm >= 1.0 && p.sobolev_norm > 0.0);

    // odd test function against even measures
    let odd = spec.sample(|x| x[0] * sflow::grid::bump_profile((x.iter().map(|v| v * v).sum::<f64>() / 1.44).min(1.0)));
    let half = sample_from_density(&mu, 150, 3, WeightMode::Uniform).unwrap();
    let mut pos = half.positions().to_vec();
    pos.extend(half.positions().iter().map(|v| -v));
    let symmetric = ParticleState::with_unit_weights(3, pos).unwrap();
    let p = coercivity_probe(&symmetric, &mu, &odd, &kernel).unwrap();
    assert!(p.lhs.abs() < 1e-12, "{}", p.lhs);

    let touching = vec![1.0; spec.len()];
    assert!(coercivity_probe(&state, &mu, &touching, &kernel).is_err());
}

#[test]
fn coercivity_lhs_decreases_with_n() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let kernel = newtonian();
    let mu = bump(spec, 1.0, 0.0);
    let phi = spec.sample(|x| (2.0 * x[0]).sin() * sflow::grid::bump_profile((x.iter().map(|v| v * v).sum::<f64>() / 2.25).min(1.0)));
    let medians: Vec<f64> = [512usize, 1024, 2048, 4096]
        .iter()
        .map(|&n| {
            let v: Vec<f64> = (0..32)
                .map(|seed| {
                    let state = sample_from_density(&mu, n, seed, WeightMode::Uniform).unwrap();
                    coercivity_probe(&state, &mu, &phi, &kernel).unwrap().lhs.abs()
                })
                .collect();
            median(&v)
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[0] > w[1]), "{medians:?}");
}

#[test]
fn stability_of_identical_data_is_zero() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let cache = FieldCache::new(spec, &newtonian(), &dipole(), 4.0 * spec.h()).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let report = stability_experiment(&mu, &mu, &PdeConfig::new(0.1, 0.05), &cache, &CouplingMatrix::Identity).unwrap();
    assert!(report.energy.iter().all(|e| e.abs() <= 1e-12));
    assert!(report.fit.is_none());
}

#[test]
fn stability_of_shifted_data_has_a_finite_rate() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let cache = FieldCache::new(spec, &newtonian(), &dipole(), 4.0 * spec.h()).unwrap();
    let a = bump(spec, 1.0, 0.0);
    let b = bump(spec, 1.0, spec.h());
    let report = stability_experiment(&a, &b, &PdeConfig::new(0.2, 0.05), &cache, &CouplingMatrix::Identity).unwrap();
    let fit = report.fit.unwrap();
    assert!(fit.rate.is_finite());
    assert!(report.envelope_ratio.unwrap() <= 1.0 + 1e-6);
    let mut csv = Vec::new();
    write_stability_csv(&report, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), report.times.len() + 1);
}

#[test]
fn convergence_smoke_run_without_source_keeps_unit_weights() {
    let spec = GridSpec::new(3, 32, 2.0).unwrap();
    let kernels = KernelSet::new(newtonian(), CouplingMatrix::Identity, SourceKernel::zero(3)).unwrap();
    let cache = FieldCache::new(spec, &kernels.coulomb, &kernels.source, 4.0 * spec.h()).unwrap();
    let mu = bump(spec, 1.0, 0.0);
    let config = ConvergenceConfig {
        particle_counts: vec![32, 64],
        seeds: vec![1, 2],
        weight_mode: WeightMode::Uniform,
        tolerance: 1e-6,
        separation_floor: 1e-6,
        quantization: 500,
        quadrature: QuadratureRule::default(),
    };
    let report = convergence_experiment(&mu, &PdeConfig::new(0.1, 0.05), &cache, &kernels, &config).unwrap();
    assert_eq!(report.cells.len(), 4);
    assert!(report.cells.iter().all(|c| c.weights_constant));
    assert!(report.cells.iter().all(|c| c.energies.len() == 3));
    let slopes = report.slopes.unwrap();
    assert!(slopes.sup_energy.is_finite() && slopes.w1.is_finite());
    let mut csv = Vec::new();
    write_convergence_csv(&report, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.lines().last().unwrap().starts_with("slope,"));

    let again = convergence_experiment(&mu, &PdeConfig::new(0.1, 0.05), &cache, &kernels, &config).unwrap();
    let mut csv2 = Vec::new();
    write_convergence_csv(&again, &mut csv2).unwrap();
    assert_eq!(text.as_bytes(), &csv2[..]);
}
