//! Interaction kernel, coupling matrix, odd source kernel and their regularizations.

pub mod coulomb;
pub mod coupling;
pub mod cutoff;
pub mod mollifier;
pub mod regularized;
pub mod source;

pub use coulomb::{Convention, CoulombKernel};
pub use coupling::CouplingMatrix;
pub use cutoff::TruncationCutoff;
pub use mollifier::{GaussianMollifier, TruncatedGaussian};
pub use regularized::{
    build_regularized_kernel, Certification, RegularizationParams, RegularizedKernel,
};
pub use source::{SourceFamily, SourceKernel};

use crate::error::{Error, Result};

/// The kernels that define one model: `V`, `J` and `S`.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub coulomb: CoulombKernel,
    pub coupling: CouplingMatrix,
    pub source: SourceKernel,
}

impl KernelSet {
    pub fn new(coulomb: CoulombKernel, coupling: CouplingMatrix, source: SourceKernel) -> Result<Self> {
        let d = coulomb.dim();
        coupling.validate_dim(d)?;
        if source.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: source.dim(),
            });
        }
        Ok(Self {
            coulomb,
            coupling,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.coulomb.dim()
    }
}
