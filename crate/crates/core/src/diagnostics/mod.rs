//! Distances between the particle system and the continuum: modulated energy,
//! `Ḣ^{-1}` norms, Wasserstein-1, and the experiments built on them.

pub mod coercivity;
pub mod energy;
pub mod experiments;
pub mod ot;
pub mod potential;
pub mod spectral;

pub use coercivity::{coercivity_probe, CoercivityProbe};
pub use energy::{
    modulated_energy, modulated_energy_with, truncated_offdiag_energy, truncated_offdiag_energy_with,
    ModulatedEnergyBreakdown, TruncatedEnergySplit,
};
pub use experiments::{
    convergence_experiment, convergence_from_run, fit_rates, stability_experiment, stability_report,
    write_convergence_csv, write_modulated_energy_csv, write_stability_csv, ConvergenceCell, ConvergenceConfig,
    ConvergenceReport, ConvergenceSlopes, ConvergenceSummary, RateFit, StabilityReport,
};
pub use ot::{transport_cost, w1_discrete, w1_distance, w1_to_quantized, QuantizedDensity, W1Estimate, COST_GUARD};
pub use potential::{
    radial_potential_3d, ContinuumPotential, Interpolation, PotentialOperator, QuadratureRule, SingularCellRule,
};
pub use spectral::{h_lipschitz_ratio, h_source, hminus1_norm_sq, hminus1_norm_sq_values, SpectralDensity};
