//! TOML experiment configuration.
//!
//! One file describes one reproducible run. Physics-bearing fields have no
//! defaults; only output strides, output paths and certification sampling do.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{ConvergenceConfig, QuadratureRule};
use crate::error::{Error, Result};
use crate::grid::{GridDensity, GridSpec};
use crate::kernels::{
    Convention, CoulombKernel, CouplingMatrix, KernelSet, RegularizationParams, SourceKernel,
};
use crate::meanfield::{PdeConfig, Splitting};
use crate::particles::{sample_from_density, IntegratorConfig, Method, ParticleState, WeightMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    SolvePde,
    Stability,
    Convergence,
    VerifyKernel,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::SolvePde => "solve-pde",
            ExperimentKind::Stability => "stability",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::VerifyKernel => "verify-kernel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub kernel: KernelBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    pub run: RunBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub dim: usize,
    pub convention: Convention,
    pub coupling: CouplingMatrix,
    pub source: SourceBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<RegularizationBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceBlock {
    Zero,
    GaussianDipole { amplitude: f64, direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationBlock {
    /// One certification per entry.
    pub epsilon: Vec<f64>,
    pub lambda: f64,
    pub c: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_samples() -> usize {
    10_000
}

fn default_retries() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleBlock {
    pub seed: u64,
    pub initial: InitialParticles,
    pub integrator: Method,
    pub separation_floor: f64,
    /// Declared bound `M` on the initial weights.
    pub weight_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialParticles {
    Explicit { positions: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Draws from the grid block's initial density.
    Sample { n: usize, weight_mode: WeightMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpBlock {
    pub radius: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub half_width: f64,
    pub n: usize,
    pub eps_moll_factor: f64,
    pub cfl: f64,
    pub splitting: Splitting,
    pub initial: BumpBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityBlock {
    pub perturbed: BumpBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub t_final: f64,
    /// Time between recorded outputs; defaults to `t_final`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Re-labels parameter errors raised by the model constructors as config errors.
fn at_field(err: Error, fallback: &str) -> Error {
    match err {
        Error::InvalidParameter { name, reason } => config_error(name, reason),
        Error::DimensionMismatch { expected, got } => {
            config_error(fallback, format!("expected dimension {expected}, got {got}"))
        }
        other => other,
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the dotted path of the offending field.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| config_error("", e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical TOML form; parsing it gives back an identical config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.kernel.dim;
        self.kernels()?;
        if let Some(reg) = &self.kernel.regularization {
            if reg.epsilon.is_empty() {
                return Err(config_error("kernel.regularization.epsilon", "must not be empty"));
            }
            for (i, &eps) in reg.epsilon.iter().enumerate() {
                self.regularization_params(eps)
                    .validate()
                    .map_err(|e| match at_field(e, "kernel.regularization") {
                        Error::Config { path, message } if path == "kernel.epsilon" => {
                            config_error(format!("kernel.regularization.epsilon[{i}]"), message)
                        }
                        Error::Config { path, message } => {
                            config_error(path.replace("kernel.", "kernel.regularization."), message)
                        }
                        other => other,
                    })?;
            }
        }
        if !(self.run.t_final > 0.0) || !self.run.t_final.is_finite() {
            return Err(config_error("run.t_final", "must be positive and finite"));
        }
        if let Some(dt) = self.run.output_interval {
            if !(dt > 0.0) {
                return Err(config_error("run.output_interval", "must be positive"));
            }
        }
        if let Some(grid) = &self.grid {
            self.grid_spec()?;
            check_bump(&grid.initial, d, "grid.initial")?;
            self.pde_config()?.validate().map_err(|e| at_field(e, "grid"))?;
        }
        if let Some(p) = &self.particles {
            self.validate_particles(p)?;
        }
        if let Some(s) = &self.stability {
            check_bump(&s.perturbed, d, "stability.perturbed")?;
        }
        if let Some(c) = &self.convergence {
            c.validate().map_err(|e| at_field(e, "convergence"))?;
        }
        let missing = |block: &str| config_error(block, format!("required by kind `{}`", self.kind.name()));
        match self.kind {
            ExperimentKind::Simulate => {
                let p = self.particles.as_ref().ok_or_else(|| missing("particles"))?;
                if matches!(p.initial, InitialParticles::Sample { .. }) && self.grid.is_none() {
                    return Err(config_error("grid", "required to sample particles"));
                }
            }
            ExperimentKind::SolvePde => {
                self.grid.as_ref().ok_or_else(|| missing("grid"))?;
            }
            ExperimentKind::Stability => {
                self.grid.as_ref().ok_or_else(|| missing("grid"))?;
                self.stability.as_ref().ok_or_else(|| missing("stability"))?;
            }
            ExperimentKind::Convergence => {
                self.grid.as_ref().ok_or_else(|| missing("grid"))?;
                self.convergence.as_ref().ok_or_else(|| missing("convergence"))?;
            }
            ExperimentKind::VerifyKernel => {
                self.kernel.regularization.as_ref().ok_or_else(|| missing("kernel.regularization"))?;
            }
        }
        Ok(())
    }

    fn validate_particles(&self, p: &ParticleBlock) -> Result<()> {
        let d = self.kernel.dim;
        if !(p.separation_floor >= 0.0) || !p.separation_floor.is_finite() {
            return Err(config_error("particles.separation_floor", "must be finite and nonnegative"));
        }
        if !(p.weight_bound > 0.0) || !p.weight_bound.is_finite() {
            return Err(config_error("particles.weight_bound", "must be positive and finite"));
        }
        self.integrator_config()?.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                config_error(name.replace("integrator.", "particles.integrator."), reason)
            }
            other => other,
        })?;
        match &p.initial {
            InitialParticles::Explicit { positions, weights } => {
                if positions.is_empty() {
                    return Err(config_error("particles.initial.positions", "must not be empty"));
                }
                if weights.len() != positions.len() {
                    return Err(config_error(
                        "particles.initial.weights",
                        format!("{} weights for {} positions", weights.len(), positions.len()),
                    ));
                }
                for (i, x) in positions.iter().enumerate() {
                    if x.len() != d || x.iter().any(|v| !v.is_finite()) {
                        return Err(config_error(
                            format!("particles.initial.positions[{i}]"),
                            format!("need {d} finite coordinates"),
                        ));
                    }
                }
                for (i, &m) in weights.iter().enumerate() {
                    if !(m >= 0.0) || !m.is_finite() {
                        return Err(config_error(
                            format!("particles.initial.weights[{i}]"),
                            format!("weight {m} must be finite and nonnegative"),
                        ));
                    }
                }
                for (i, &m) in weights.iter().enumerate() {
                    if m > p.weight_bound {
                        return Err(config_error(
                            format!("particles.initial.weights[{i}]"),
                            format!("weight {m} exceeds weight_bound {}", p.weight_bound),
                        ));
                    }
                }
                let mean = weights.iter().sum::<f64>() / weights.len() as f64;
                if (mean - 1.0).abs() > crate::particles::state::MEAN_WEIGHT_TOL {
                    return Err(config_error("particles.initial.weights", format!("mean weight {mean} is not 1")));
                }
            }
            InitialParticles::Sample { n, .. } => {
                if *n == 0 {
                    return Err(config_error("particles.initial.n", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn coulomb(&self) -> Result<CoulombKernel> {
        CoulombKernel::new(self.kernel.dim, self.kernel.convention).map_err(|e| match e {
            Error::InvalidParameter { reason, .. } => config_error("kernel.dim", reason),
            other => other,
        })
    }

    pub fn source(&self) -> Result<SourceKernel> {
        let d = self.kernel.dim;
        match &self.kernel.source {
            SourceBlock::Zero => Ok(SourceKernel::zero(d)),
            SourceBlock::GaussianDipole { amplitude, direction } => {
                SourceKernel::gaussian_dipole(d, *amplitude, direction).map_err(|e| match e {
                    Error::InvalidParameter { name, reason } => config_error(format!("kernel.{name}"), reason),
                    Error::DimensionMismatch { expected, got } => config_error(
                        "kernel.source.direction",
                        format!("expected {expected} components, got {got}"),
                    ),
                    other => other,
                })
            }
        }
    }

    pub fn kernels(&self) -> Result<KernelSet> {
        let coupling = match &self.kernel.coupling {
            CouplingMatrix::Identity => CouplingMatrix::Identity,
            CouplingMatrix::Antisymmetric(rows) => CouplingMatrix::antisymmetric(rows.clone())
                .map_err(|e| at_field(e, "kernel.coupling.matrix"))
                .map_err(|e| match e {
                    Error::Config { path, message } if path == "coupling.matrix" => {
                        config_error("kernel.coupling.matrix", message)
                    }
                    other => other,
                })?,
        };
        KernelSet::new(self.coulomb()?, coupling, self.source()?).map_err(|e| at_field(e, "kernel.coupling.matrix"))
    }

    pub fn regularization_params(&self, epsilon: f64) -> RegularizationParams {
        let reg = self.kernel.regularization.as_ref();
        let mut params = RegularizationParams::new(epsilon);
        if let Some(reg) = reg {
            params = params.with_lambda(reg.lambda).with_c(reg.c);
        }
        params
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let grid = self.grid.as_ref().ok_or_else(|| config_error("grid", "missing"))?;
        GridSpec::new(self.kernel.dim, grid.n, grid.half_width).map_err(|e| at_field(e, "grid"))
    }

    pub fn output_interval(&self) -> f64 {
        self.run.output_interval.unwrap_or(self.run.t_final)
    }

    pub fn pde_config(&self) -> Result<PdeConfig> {
        let grid = self.grid.as_ref().ok_or_else(|| config_error("grid", "missing"))?;
        Ok(PdeConfig {
            eps_moll_factor: grid.eps_moll_factor,
            cfl: grid.cfl,
            t_final: self.run.t_final,
            output_interval: self.output_interval(),
            splitting: grid.splitting,
        })
    }

    pub fn initial_density(&self) -> Result<GridDensity> {
        let grid = self.grid.as_ref().ok_or_else(|| config_error("grid", "missing"))?;
        bump_density(self.grid_spec()?, &grid.initial)
    }

    pub fn perturbed_density(&self) -> Result<GridDensity> {
        let s = self.stability.as_ref().ok_or_else(|| config_error("stability", "missing"))?;
        bump_density(self.grid_spec()?, &s.perturbed)
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        let p = self.particles.as_ref().ok_or_else(|| config_error("particles", "missing"))?;
        Ok(IntegratorConfig {
            method: p.integrator,
            t_final: self.run.t_final,
            record_interval: self.output_interval(),
            separation_floor: p.separation_floor,
        })
    }

    pub fn initial_particles(&self) -> Result<ParticleState> {
        let p = self.particles.as_ref().ok_or_else(|| config_error("particles", "missing"))?;
        match &p.initial {
            InitialParticles::Explicit { positions, weights } => {
                let flat: Vec<f64> = positions.iter().flatten().copied().collect();
                ParticleState::new(self.kernel.dim, flat, weights.clone(), 0.0)
                    .map_err(|e| at_field(e, "particles.initial.positions"))
            }
            InitialParticles::Sample { n, weight_mode } => {
                sample_from_density(&self.initial_density()?, *n, p.seed, *weight_mode)
            }
        }
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.convergence.as_ref().map(|c| c.quadrature).unwrap_or_default()
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(p) = &mut self.particles {
            p.seed = seed;
        }
        if let Some(c) = &mut self.convergence {
            c.seeds = vec![seed];
        }
        if let Some(r) = &mut self.kernel.regularization {
            r.seed = seed;
        }
    }
}

fn check_bump(bump: &BumpBlock, d: usize, path: &str) -> Result<()> {
    if !(bump.radius > 0.0) || !bump.radius.is_finite() {
        return Err(config_error(format!("{path}.radius"), "must be positive and finite"));
    }
    if bump.center.len() != d || bump.center.iter().any(|c| !c.is_finite()) {
        return Err(config_error(format!("{path}.center"), format!("need {d} finite coordinates")));
    }
    Ok(())
}

fn bump_density(spec: GridSpec, bump: &BumpBlock) -> Result<GridDensity> {
    GridDensity::bump_at(spec, bump.radius, &bump.center)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
