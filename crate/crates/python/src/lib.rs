//! Python bindings for `sflow`.
//!
//! Arrays cross the boundary as flat lists of floats; positions are row-major
//! `N x d`, grid values follow the grid's flat index.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sflow::cli::ExperimentConfig;
use sflow::diagnostics;
use sflow::grid::{GridDensity, GridSpec};
use sflow::kernels::{
    build_regularized_kernel, Convention, CoulombKernel, CouplingMatrix, KernelSet, RegularizationParams,
    SourceKernel,
};
use sflow::meanfield::{self, FieldCache, PdeConfig};
use sflow::particles::{self, IntegratorConfig, WeightMode};

create_exception!(sflow, SflowError, PyException);

fn err(e: sflow::Error) -> PyErr {
    SflowError::new_err(e.to_string())
}

fn convention(name: &str) -> PyResult<Convention> {
    match name {
        "raw" => Ok(Convention::Raw),
        "scaled" => Ok(Convention::Scaled),
        "newtonian" => Ok(Convention::Newtonian),
        other => Err(SflowError::new_err(format!("unknown convention `{other}`"))),
    }
}

fn coupling(name: &str, dim: usize) -> PyResult<CouplingMatrix> {
    match name {
        "identity" => Ok(CouplingMatrix::Identity),
        "rotation" => Ok(CouplingMatrix::rotation(dim)),
        other => Err(SflowError::new_err(format!("unknown coupling `{other}` (identity or rotation)"))),
    }
}

/// Zero source for amplitude 0, otherwise the Gaussian dipole along the first axis.
fn source(dim: usize, amplitude: f64) -> PyResult<SourceKernel> {
    if amplitude == 0.0 {
        return Ok(SourceKernel::zero(dim));
    }
    let mut direction = vec![0.0; dim];
    direction[0] = 1.0;
    SourceKernel::gaussian_dipole(dim, amplitude, &direction).map_err(err)
}

/// Repulsive Coulomb kernel `V = a |x|^{2-d}`.
#[pyclass(name = "CoulombKernel", module = "sflow")]
struct PyCoulombKernel {
    inner: CoulombKernel,
}

#[pymethods]
impl PyCoulombKernel {
    #[new]
    #[pyo3(signature = (dim = 3, convention = "raw"))]
    fn new(dim: usize, convention: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoulombKernel::new(dim, self::convention(convention)?).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&x).map_err(err)
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad(&x).map_err(err)
    }

    fn fourier_symbol(&self, xi_norm: f64) -> f64 {
        self.inner.fourier_symbol(xi_norm)
    }

    fn __repr__(&self) -> String {
        format!("CoulombKernel(dim={}, convention='{}')", self.inner.dim(), self.inner.convention().name())
    }
}

/// Particle positions and weights at one time.
#[pyclass(name = "ParticleState", module = "sflow", skip_from_py_object)]
#[derive(Clone)]
struct PyParticleState {
    inner: particles::ParticleState,
}

#[pymethods]
impl PyParticleState {
    #[new]
    #[pyo3(signature = (positions, weights = None, t = 0.0))]
    fn new(positions: Vec<Vec<f64>>, weights: Option<Vec<f64>>, t: f64) -> PyResult<Self> {
        let dim = positions.first().map(|p| p.len()).unwrap_or(0);
        let n = positions.len();
        let flat: Vec<f64> = positions.into_iter().flatten().collect();
        if flat.len() != n * dim {
            return Err(SflowError::new_err("all positions must have the same length"));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        Ok(Self {
            inner: particles::ParticleState::new(dim, flat, weights, t).map_err(err)?,
        })
    }

    /// Draws `n` particles from a grid density.
    #[staticmethod]
    #[pyo3(signature = (density, n, seed = 0, importance = false))]
    fn sample(density: PyRef<'_, PyGridDensity>, n: usize, seed: u64, importance: bool) -> PyResult<Self> {
        let mode = if importance { WeightMode::IidImportance } else { WeightMode::Uniform };
        Ok(Self {
            inner: particles::sample_from_density(&density.inner, n, seed, mode).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t()
    }

    fn positions(&self) -> Vec<Vec<f64>> {
        self.inner.positions().chunks(self.inner.dim()).map(|c| c.to_vec()).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn min_separation(&self) -> PyResult<f64> {
        self.inner.min_separation().map_err(err)
    }

    fn interaction_energy(&self, kernel: PyRef<'_, PyCoulombKernel>) -> PyResult<f64> {
        self.inner.interaction_energy(&kernel.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("ParticleState(n={}, dim={}, t={})", self.inner.n(), self.inner.dim(), self.inner.t())
    }
}

/// Unit-mass density on a uniform grid over `[-L, L)^d`.
#[pyclass(name = "GridDensity", module = "sflow", skip_from_py_object)]
#[derive(Clone)]
struct PyGridDensity {
    inner: GridDensity,
}

#[pymethods]
impl PyGridDensity {
    /// Smooth radial bump of the given radius and centre.
    #[staticmethod]
    #[pyo3(signature = (n, half_width, radius, center = None, dim = 3))]
    fn bump(n: usize, half_width: f64, radius: f64, center: Option<Vec<f64>>, dim: usize) -> PyResult<Self> {
        let spec = GridSpec::new(dim, n, half_width).map_err(err)?;
        let center = center.unwrap_or_else(|| vec![0.0; dim]);
        Ok(Self {
            inner: GridDensity::bump_at(spec, radius, &center).map_err(err)?,
        })
    }

    /// Wraps node values, rescaling them to unit mass.
    #[staticmethod]
    #[pyo3(signature = (n, half_width, values, dim = 3))]
    fn from_values(n: usize, half_width: f64, values: Vec<f64>, dim: usize) -> PyResult<Self> {
        let spec = GridSpec::new(dim, n, half_width).map_err(err)?;
        Ok(Self {
            inner: GridDensity::normalized(spec, values, 0.0).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: GridDensity::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.spec().n
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.spec().half_width
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn lp_norm(&self, p: f64) -> f64 {
        self.inner.lp_norm(p)
    }

    fn support_radius(&self) -> f64 {
        meanfield::support_radius(&self.inner, None)
    }

    fn __repr__(&self) -> String {
        let spec = self.inner.spec();
        format!("GridDensity(dim={}, n={}, half_width={}, t={})", spec.dim, spec.n, spec.half_width, self.inner.time())
    }
}

/// Integrates the particle system with RKF45; returns the snapshots and their monitors.
#[pyfunction]
#[pyo3(signature = (state, t_final, record_interval = None, tol = 1e-8, convention = "raw", coupling = "identity", source_amplitude = 0.0))]
fn integrate<'py>(
    py: Python<'py>,
    state: PyRef<'_, PyParticleState>,
    t_final: f64,
    record_interval: Option<f64>,
    tol: f64,
    convention: &str,
    coupling: &str,
    source_amplitude: f64,
) -> PyResult<(Vec<PyParticleState>, Vec<Bound<'py, PyDict>>)> {
    let d = state.inner.dim();
    let kernels = KernelSet::new(
        CoulombKernel::new(d, self::convention(convention)?).map_err(err)?,
        self::coupling(coupling, d)?,
        source(d, source_amplitude)?,
    )
    .map_err(err)?;
    let cfg = IntegratorConfig::rkf45(t_final, tol).with_record_interval(record_interval.unwrap_or(t_final));
    let inner = state.inner.clone();
    let record = py.detach(|| particles::integrate(&inner, &cfg, &kernels)).map_err(err)?;
    let monitors = record
        .monitors
        .iter()
        .map(|m| {
            let dict = PyDict::new(py);
            dict.set_item("t", m.t)?;
            dict.set_item("mean_weight", m.mean_weight)?;
            dict.set_item("max_weight", m.max_weight)?;
            dict.set_item("min_weight", m.min_weight)?;
            dict.set_item("min_separation", m.min_separation)?;
            dict.set_item("interaction_energy", m.interaction_energy)?;
            Ok(dict)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let states = record.states.into_iter().map(|inner| PyParticleState { inner }).collect();
    Ok((states, monitors))
}

/// Solves the mollified mean-field equation (Newtonian kernel); returns the
/// snapshots and their norm monitors.
#[pyfunction]
#[pyo3(signature = (density, t_final, output_interval = None, coupling = "identity", source_amplitude = 0.0, eps_moll_factor = 4.0))]
fn solve_pde<'py>(
    py: Python<'py>,
    density: PyRef<'_, PyGridDensity>,
    t_final: f64,
    output_interval: Option<f64>,
    coupling: &str,
    source_amplitude: f64,
    eps_moll_factor: f64,
) -> PyResult<(Vec<PyGridDensity>, Vec<Bound<'py, PyDict>>)> {
    let spec = *density.inner.spec();
    let mut cfg = PdeConfig::new(t_final, output_interval.unwrap_or(t_final));
    cfg.eps_moll_factor = eps_moll_factor;
    let kernel = CoulombKernel::new(spec.dim, Convention::Newtonian).map_err(err)?;
    let coupling = self::coupling(coupling, spec.dim)?;
    let source = source(spec.dim, source_amplitude)?;
    let mu0 = density.inner.clone();
    let run = py
        .detach(|| {
            cfg.validate()?;
            let cache = FieldCache::new(spec, &kernel, &source, cfg.eps_moll(spec.h()))?;
            meanfield::solve(&mu0, &cfg, &cache, &coupling)
        })
        .map_err(err)?;
    let monitors = run
        .monitors
        .iter()
        .map(|m| {
            let dict = PyDict::new(py);
            dict.set_item("t", m.t)?;
            dict.set_item("mass", m.mass)?;
            dict.set_item("l1", m.l1)?;
            dict.set_item("l2", m.l2)?;
            dict.set_item("linf", m.linf)?;
            dict.set_item("w12", m.w12)?;
            dict.set_item("w14", m.w14)?;
            dict.set_item("support_radius", m.support_radius)?;
            Ok(dict)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let snapshots = run.snapshots.into_iter().map(|inner| PyGridDensity { inner }).collect();
    Ok((snapshots, monitors))
}

/// Modulated energy of a particle state against a density: self, cross,
/// continuum and total terms.
#[pyfunction]
#[pyo3(signature = (state, density, convention = "newtonian"))]
fn modulated_energy<'py>(
    py: Python<'py>,
    state: PyRef<'_, PyParticleState>,
    density: PyRef<'_, PyGridDensity>,
    convention: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let kernel = CoulombKernel::new(state.inner.dim(), self::convention(convention)?).map_err(err)?;
    let e = diagnostics::modulated_energy(&state.inner, &density.inner, &kernel).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("self", e.self_term)?;
    dict.set_item("cross", e.cross_term)?;
    dict.set_item("continuum", e.continuum_term)?;
    dict.set_item("total", e.total)?;
    Ok(dict)
}

/// Squared homogeneous `H^{-1}` distance between two densities on the same grid.
#[pyfunction]
#[pyo3(signature = (a, b, convention = "newtonian"))]
fn hminus1_norm_sq(a: PyRef<'_, PyGridDensity>, b: PyRef<'_, PyGridDensity>, convention: &str) -> PyResult<f64> {
    let kernel = CoulombKernel::new(a.inner.spec().dim, self::convention(convention)?).map_err(err)?;
    diagnostics::hminus1_norm_sq(&a.inner, &b.inner, &kernel).map_err(err)
}

/// Exact `W_1` between the particles and a quantized density: `(distance, uncertainty)`.
#[pyfunction]
#[pyo3(signature = (state, density, budget = 2048))]
fn w1_distance(state: PyRef<'_, PyParticleState>, density: PyRef<'_, PyGridDensity>, budget: usize) -> PyResult<(f64, f64)> {
    let w = diagnostics::w1_distance(&state.inner, &density.inner, budget).map_err(err)?;
    Ok((w.distance, w.uncertainty))
}

/// Builds and certifies the regularized kernel; returns the certification record.
#[pyfunction]
#[pyo3(signature = (epsilon, dim = 3, convention = "raw", lam = 0.5, c = 4.0, samples = 10000, seed = 0))]
fn verify_kernel<'py>(
    py: Python<'py>,
    epsilon: f64,
    dim: usize,
    convention: &str,
    lam: f64,
    c: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let kernel = CoulombKernel::new(dim, self::convention(convention)?).map_err(err)?;
    let params = RegularizationParams::new(epsilon).with_lambda(lam).with_c(c);
    let (_, cert) = py.detach(|| build_regularized_kernel(&kernel, params, samples, seed, 3)).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("passed", cert.passed())?;
    dict.set_item("c", cert.c)?;
    dict.set_item("domination_worst_excess", cert.domination_worst_excess)?;
    dict.set_item("fft_min", cert.fft_min)?;
    dict.set_item("fft_max", cert.fft_max)?;
    dict.set_item("sup_norm", cert.sup_norm)?;
    dict.set_item("ladder", cert.ladder)?;
    Ok(dict)
}

/// Runs a TOML experiment config into `out`, as the command-line tool would.
/// Returns the exit code.
#[pyfunction]
#[pyo3(signature = (config, out, quiet = true))]
fn run_config(py: Python<'_>, config: PathBuf, out: PathBuf, quiet: bool) -> PyResult<i32> {
    let config = ExperimentConfig::load(&config).map_err(err)?;
    Ok(match py.detach(|| sflow::cli::execute(&config, &out, quiet)) {
        Ok(()) => 0,
        Err(e) => e.exit_code(),
    })
}

#[pymodule(name = "sflow")]
fn sflow_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SflowError", m.py().get_type::<SflowError>())?;
    m.add_class::<PyCoulombKernel>()?;
    m.add_class::<PyParticleState>()?;
    m.add_class::<PyGridDensity>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pde, m)?)?;
    m.add_function(wrap_pyfunction!(modulated_energy, m)?)?;
    m.add_function(wrap_pyfunction!(hminus1_norm_sq, m)?)?;
    m.add_function(wrap_pyfunction!(w1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(verify_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
