//! Weighted singular Coulomb flows.
//!
//! Particles `x_i` with time-varying weights `m_i` move under
//! `ẋ_i = -(1/N) Σ_{j≠i} m_j J∇V(x_i - x_j)` while the weights exchange mass
//! through an odd kernel, `ṁ_i = (1/N) Σ_j m_i m_j S(x_i - x_j)`. The crate
//! integrates that system, solves the mollified mean-field transport equation
//! `∂_t μ - div(μ J∇V ⋆ μ) = μ (S ⋆ μ)` on a grid, and measures how far the two
//! are apart with modulated energies, `Ḣ^{-1}` norms and Wasserstein distances.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod grid;
pub mod kernels;
pub mod meanfield;
pub mod output;
pub mod particles;
pub mod special;

pub use error::{Error, Result};
