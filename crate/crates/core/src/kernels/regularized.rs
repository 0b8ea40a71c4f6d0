use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::NdFft;

use super::coulomb::CoulombKernel;
use super::mollifier::GaussianMollifier;

/// Inputs of the multi-scale construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub epsilon: f64,
    pub lambda: f64,
    pub c: f64,
    pub table_nodes: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl RegularizationParams {
    pub const DEFAULT_LAMBDA: f64 = 0.5;
    pub const DEFAULT_C: f64 = 4.0;

    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            lambda: Self::DEFAULT_LAMBDA,
            c: Self::DEFAULT_C,
            table_nodes: 4096,
            r_min: 1e-6,
            r_max: 1e3,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("kernel.epsilon", format!("need 0 < epsilon < 1, got {}", self.epsilon)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid("kernel.lambda", format!("need 0 < lambda < 1, got {}", self.lambda)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid("kernel.c", format!("need a positive finite constant, got {}", self.c)));
        }
        if self.table_nodes < 4 || !(self.r_min > 0.0 && self.r_max > self.r_min) {
            return Err(Error::invalid("kernel.table", "need >= 4 nodes and 0 < r_min < r_max"));
        }
        Ok(())
    }
}

/// Contraction factor `min{(1 + 2^{1/k})^{-1}, ((d - k)/2)^{1/k}}` of the scale ladder.
pub fn ladder_contraction(dim: usize, k: usize) -> f64 {
    let kf = k as f64;
    let a = 1.0 / (1.0 + 2f64.powf(1.0 / kf));
    let b = ((dim - k) as f64 / 2.0).powf(1.0 / kf);
    a.min(b)
}

/// Scales `δ_1 = ε^{2/λ} / C`, `δ_{i+1} = min{f(δ_i), δ_i^{1/λ}}`, `⌊1/ε⌋` levels.
pub fn scale_ladder(kernel: &CoulombKernel, epsilon: f64, lambda: f64, c: f64) -> Result<Vec<f64>> {
    let levels = (1.0 / epsilon).floor() as usize;
    let k = kernel.exponent();
    let contraction = ladder_contraction(kernel.dim(), k);
    let mut ladder = Vec::with_capacity(levels);
    let mut delta = epsilon.powf(2.0 / lambda) / c;
    for level in 1..=levels {
        if level > 1 {
            delta = (contraction * delta).min(delta.powf(1.0 / lambda));
        }
        if delta < f64::MIN_POSITIVE || !delta.powi(-(k as i32)).is_finite() {
            return Err(Error::LadderUnderflow { level, delta });
        }
        ladder.push(delta);
    }
    Ok(ladder)
}

/// `V_ε = (1 + 2Cε)^{-1} M^{-1} Σ_i K^1_{δ_i} ⋆ V`, tabulated in `ln r`.
#[derive(Debug, Clone)]
pub struct RegularizedKernel {
    kernel: CoulombKernel,
    params: RegularizationParams,
    ladder: Vec<f64>,
    weight: f64,
    log_r_min: f64,
    log_step: f64,
    /// `r^k V_ε(r)` at the log-spaced nodes.
    table: Vec<f64>,
    sup_norm: f64,
}

impl RegularizedKernel {
    pub fn build(kernel: &CoulombKernel, params: RegularizationParams) -> Result<Self> {
        params.validate()?;
        let ladder = scale_ladder(kernel, params.epsilon, params.lambda, params.c)?;
        let weight = 1.0 / (ladder.len() as f64 * (1.0 + 2.0 * params.c * params.epsilon));
        let log_r_min = params.r_min.ln();
        let log_step = (params.r_max.ln() - log_r_min) / (params.table_nodes - 1) as f64;
        let mut out = Self {
            kernel: kernel.clone(),
            params,
            ladder,
            weight,
            log_r_min,
            log_step,
            table: Vec::new(),
            sup_norm: 0.0,
        };
        let k = kernel.exponent() as i32;
        out.table = (0..params.table_nodes)
            .map(|j| {
                let r = (log_r_min + j as f64 * log_step).exp();
                r.powi(k) * out.eval_exact(r)
            })
            .collect();
        out.sup_norm = out.eval_exact(0.0);
        if !out.sup_norm.is_finite() {
            let level = out.ladder.len();
            return Err(Error::LadderUnderflow {
                level,
                delta: out.ladder[level - 1],
            });
        }
        Ok(out)
    }

    pub fn kernel(&self) -> &CoulombKernel {
        &self.kernel
    }

    pub fn params(&self) -> &RegularizationParams {
        &self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    pub fn levels(&self) -> usize {
        self.ladder.len()
    }

    /// `‖V_ε‖_∞ = V_ε(0)`; the mixture of Gaussian-smoothed potentials peaks at the origin.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Closed-form evaluation as a function of the radius.
    pub fn eval_exact(&self, r: f64) -> f64 {
        let moll = GaussianMollifier::new(self.kernel.dim());
        self.weight
            * self
                .ladder
                .iter()
                .map(|&delta| moll.smoothed_coulomb(&self.kernel, r, delta))
                .sum::<f64>()
    }

    /// Tabulated evaluation (cubic Hermite in `ln r`).
    pub fn eval_radial(&self, r: f64) -> f64 {
        if r < self.params.r_min {
            return self.eval_exact(r);
        }
        if r > self.params.r_max {
            // every level is a point mass seen from this far out
            return self.kernel.radial(r) / (1.0 + 2.0 * self.params.c * self.params.epsilon);
        }
        let s = (r.ln() - self.log_r_min) / self.log_step;
        let last = self.table.len() - 1;
        let j = (s.floor().max(0.0) as usize).min(last - 1);
        let t = s - j as f64;
        let y = &self.table;
        let slope = |i: usize| -> f64 {
            if i == 0 {
                y[1] - y[0]
            } else if i == last {
                y[last] - y[last - 1]
            } else {
                0.5 * (y[i + 1] - y[i - 1])
            }
        };
        let (y0, y1, m0, m1) = (y[j], y[j + 1], slope(j), slope(j + 1));
        let t2 = t * t;
        let t3 = t2 * t;
        let u = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        u * r.powi(-(self.kernel.exponent() as i32))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_radial(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Checks domination, the Fourier-positivity proxy and finiteness.
    pub fn certify(&self, samples: usize, seed: u64) -> Certification {
        let eps = self.params.epsilon;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (0.01f64.ln(), 10f64.ln());
        let mut worst = f64::NEG_INFINITY;
        let mut table_err: f64 = 0.0;
        let check = |r: f64, worst: &mut f64| {
            let v = self.eval_radial(r);
            *worst = worst.max(v - self.kernel.radial(r) - eps);
            v
        };
        for _ in 0..samples {
            let r = rng.random_range(lo..hi).exp();
            let v = check(r, &mut worst);
            let exact = self.eval_exact(r);
            table_err = table_err.max((v - exact).abs() / exact);
        }
        for j in 0..self.table.len() {
            check((self.log_r_min + j as f64 * self.log_step).exp(), &mut worst);
        }
        let (fft_min, fft_max) = self.windowed_spectrum_range();
        let ladder_decreasing = self.ladder.windows(2).all(|w| w[1] < w[0]);
        Certification {
            c: self.params.c,
            attempts: 1,
            epsilon: eps,
            lambda: self.params.lambda,
            domination_samples: samples + self.table.len(),
            domination_worst_excess: worst,
            domination_pass: worst <= 0.0,
            fft_min,
            fft_max,
            fft_pass: fft_min >= -1e-6 * fft_max,
            sup_norm: self.sup_norm,
            sup_finite: self.sup_norm.is_finite(),
            ladder: self.ladder.clone(),
            ladder_decreasing,
            table_max_rel_error: table_err,
        }
    }

    /// Extreme real parts of the DFT of `V_ε · w` on a box, `w` a Gaussian window.
    /// Both factors have nonnegative transforms, so the product does too.
    fn windowed_spectrum_range(&self) -> (f64, f64) {
        let d = self.kernel.dim();
        let n = if d <= 3 { 64 } else { 16 };
        let half_width = 4.0;
        let h = 2.0 * half_width / n as f64;
        let fft = NdFft::new(d, n);
        let mut buf = vec![Complex64::default(); fft.total()];
        let mut idx = vec![0usize; d];
        for (flat, v) in buf.iter_mut().enumerate() {
            crate::fft::unflatten(flat, n, &mut idx);
            // origin at index 0 so the sampled function is even on the periodic grid
            let r2: f64 = idx
                .iter()
                .map(|&i| {
                    let x = crate::fft::signed_index(i, n) as f64 * h;
                    x * x
                })
                .sum();
            *v = Complex64::new(self.eval_radial(r2.sqrt()) * (-r2 / 0.72).exp(), 0.0);
        }
        fft.forward(&mut buf);
        buf.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.re), hi.max(c.re))
        })
    }
}

/// Outcome of [`RegularizedKernel::certify`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub c: f64,
    pub attempts: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub domination_samples: usize,
    /// `max (V_ε - V - ε)` over the sample set and the table nodes.
    pub domination_worst_excess: f64,
    pub domination_pass: bool,
    pub fft_min: f64,
    pub fft_max: f64,
    pub fft_pass: bool,
    pub sup_norm: f64,
    pub sup_finite: bool,
    pub ladder: Vec<f64>,
    pub ladder_decreasing: bool,
    pub table_max_rel_error: f64,
}

impl Certification {
    pub fn passed(&self) -> bool {
        self.domination_pass && self.fft_pass && self.sup_finite && self.ladder_decreasing
    }
}

/// Builds `V_ε` and certifies it, doubling `C` after each failed certification.
pub fn build_regularized_kernel(
    kernel: &CoulombKernel,
    params: RegularizationParams,
    samples: usize,
    seed: u64,
    max_retries: usize,
) -> Result<(RegularizedKernel, Certification)> {
    let mut params = params;
    let mut attempt = 1;
    loop {
        let reg = RegularizedKernel::build(kernel, params)?;
        let mut cert = reg.certify(samples, seed);
        cert.attempts = attempt;
        if cert.passed() || attempt > max_retries {
            return Ok((reg, cert));
        }
        params.c *= 2.0;
        attempt += 1;
    }
}
