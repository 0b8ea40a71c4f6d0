//! Weighted `N`-particle system: state, right-hand side, time integration,
//! invariant monitors and sampling from grid densities.

pub mod dynamics;
pub mod integrator;
pub mod io;
pub mod monitors;
pub mod sampling;
pub mod state;

pub use dynamics::{rhs, rhs_vector};
pub use integrator::{integrate, integrate_with, step, IntegratorConfig, Method, TrajectoryRecord};
pub use monitors::{energy_envelope, separation_lower_bound, weight_monitors, Snapshot, WeightMonitors};
pub use sampling::{cell_rng, sample_from_density, WeightMode};
pub use state::ParticleState;
