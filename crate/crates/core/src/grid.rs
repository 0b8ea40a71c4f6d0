//! Uniform node-centred grids on `[-L, L)^d` and densities sampled on them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of outermost cells per side that must stay empty.
pub const GUARD_CELLS: usize = 2;

/// `n^d` nodes `x_i = (i - n/2) h`, `h = 2L / n`, stored row-major (last axis fastest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("grid.dim", "must be positive"));
        }
        if n < 2 * GUARD_CELLS + 2 || n % 2 != 0 {
            return Err(Error::invalid("grid.n", format!("need an even count >= {}, got {n}", 2 * GUARD_CELLS + 2)));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::invalid("grid.half_width", "must be positive and finite"));
        }
        Ok(Self { dim, n, half_width })
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.h()
    }

    /// Row-major stride of `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn unflatten(&self, flat: usize, out: &mut [usize]) {
        crate::fft::unflatten(flat, self.n, out)
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Node position of a flat index.
    pub fn position(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for slot in out.iter_mut().rev() {
            *slot = self.coord(rem % self.n);
            rem /= self.n;
        }
    }

    /// All node positions, flattened `[x_0, ..., x_{d-1}]` per node.
    pub fn positions(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * self.dim];
        for (flat, p) in out.chunks_mut(self.dim).enumerate() {
            self.position(flat, p);
        }
        out
    }

    /// Whether a flat index lies in the outer guard shell.
    pub fn in_guard_shell(&self, flat: usize) -> bool {
        let mut rem = flat;
        for _ in 0..self.dim {
            let i = rem % self.n;
            rem /= self.n;
            if i < GUARD_CELLS || i >= self.n - GUARD_CELLS {
                return true;
            }
        }
        false
    }

    /// Samples a function on the nodes.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        (0..self.len())
            .map(|flat| {
                self.position(flat, &mut x);
                f(&x)
            })
            .collect()
    }

    /// Lower corner node index and fractional offsets for multilinear interpolation.
    /// Errors when the point is outside the node hull.
    pub fn locate(&self, x: &[f64], base: &mut [usize], frac: &mut [f64]) -> Option<()> {
        let h = self.h();
        for a in 0..self.dim {
            let s = x[a] / h + (self.n / 2) as f64;
            if !(s >= 0.0) || s > (self.n - 1) as f64 {
                return None;
            }
            let i = (s.floor() as usize).min(self.n - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        Some(())
    }

    /// Multilinear interpolation of node values at `x`; `None` outside the node hull.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let d = self.dim;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        self.locate(x, &mut base, &mut frac)?;
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> (d - 1 - a)) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.n + base[a] + bit;
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        Some(acc)
    }

    /// Tensor-product cubic Lagrange interpolation on the 4^d surrounding nodes.
    /// Falls back to [`GridSpec::interpolate`] next to the boundary, where the
    /// stencil does not fit.
    pub fn interpolate_cubic(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let d = self.dim;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        self.locate(x, &mut base, &mut frac)?;
        if base.iter().any(|&b| b == 0 || b + 2 >= self.n) {
            return self.interpolate(values, x);
        }
        let weights: Vec<[f64; 4]> = frac
            .iter()
            .map(|&t| {
                [
                    -t * (t - 1.0) * (t - 2.0) / 6.0,
                    (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                    -(t + 1.0) * t * (t - 2.0) / 2.0,
                    (t + 1.0) * t * (t - 1.0) / 6.0,
                ]
            })
            .collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << (2 * d)) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let o = (corner >> (2 * (d - 1 - a))) & 3;
                w *= weights[a][o];
                flat = flat * self.n + base[a] + o - 1;
            }
            acc += w * values[flat];
        }
        Some(acc)
    }
}

/// Nonnegative density on a [`GridSpec`] with unit mass `h^d Σ μ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    spec: GridSpec,
    values: Vec<f64>,
    time: f64,
}

/// Shape of the default initial datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub radius: f64,
    pub center_offset: f64,
}

impl GridDensity {
    /// Wraps values without normalizing; checks shape, sign, mass and guard shell.
    pub fn new(spec: GridSpec, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: values.len(),
            });
        }
        let density = Self { spec, values, time };
        density.validate()?;
        Ok(density)
    }

    /// Wraps values after rescaling them to unit mass.
    pub fn normalized(spec: GridSpec, mut values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: values.len(),
            });
        }
        let mass: f64 = values.iter().sum::<f64>() * spec.cell_volume();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::invalid("density", "total mass must be positive and finite"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(spec, values, time)
    }

    /// Internal constructor for solver output whose invariants hold by construction.
    pub(crate) fn from_parts(spec: GridSpec, values: Vec<f64>, time: f64) -> Self {
        Self { spec, values, time }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(spec: GridSpec, f: F) -> Result<Self> {
        Self::normalized(spec, spec.sample(f), 0.0)
    }

    /// Smooth compactly supported radial bump `exp(-1 / (1 - |x - c|^2 / R^2))`
    /// centred at `c = center_offset e_1`.
    pub fn bump(spec: GridSpec, bump: Bump) -> Result<Self> {
        let mut center = vec![0.0; spec.dim];
        center[0] = bump.center_offset;
        Self::bump_at(spec, bump.radius, &center)
    }

    /// Radial bump of radius `radius` centred at an arbitrary point.
    pub fn bump_at(spec: GridSpec, radius: f64, center: &[f64]) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("bump.radius", "must be positive"));
        }
        if center.len() != spec.dim {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                got: center.len(),
            });
        }
        Self::from_fn(spec, |x| {
            let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
            bump_profile(r2 / (radius * radius))
        })
    }

    /// One-hot density: unit mass in a single cell.
    pub fn one_hot(spec: GridSpec, flat: usize) -> Result<Self> {
        let mut values = vec![0.0; spec.len()];
        values[flat] = 1.0 / spec.cell_volume();
        Self::new(spec, values, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "density",
                format!("cell {i} holds {} (must be finite and nonnegative)", self.values[i]),
            ));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::MassMismatch { lhs: mass, rhs: 1.0 });
        }
        if self.guard_shell_max() > 0.0 {
            return Err(Error::EnlargeBox { t: self.time });
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn guard_shell_max(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.spec.in_guard_shell(*i))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }

    /// `L^p` norm by the midpoint rule; `p = inf` for the max norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.values, self.spec.cell_volume(), p)
    }

    /// First moment `∫ x μ`.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.spec.dim;
        let mut x = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for (flat, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            self.spec.position(flat, &mut x);
            for a in 0..d {
                acc[a] += v * x[a];
            }
        }
        acc.iter().map(|s| s * self.spec.cell_volume()).collect()
    }

    /// Per-axis variance `∫ (x_a - m_a)^2 μ`.
    pub fn variance(&self) -> Vec<f64> {
        let d = self.spec.dim;
        let m = self.mean();
        let mut x = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for (flat, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            self.spec.position(flat, &mut x);
            for a in 0..d {
                acc[a] += v * (x[a] - m[a]).powi(2);
            }
        }
        acc.iter().map(|s| s * self.spec.cell_volume()).collect()
    }

    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        self.spec.interpolate(&self.values, x)
    }

    /// Writes the binary `SFGD` format: 32-byte header then `n^d` little-endian f64.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"SFGD")?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.spec.dim as u32).to_le_bytes())?;
        out.write_all(&(self.spec.n as u32).to_le_bytes())?;
        out.write_all(&self.spec.half_width.to_le_bytes())?;
        out.write_all(&self.time.to_le_bytes())?;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 32];
        input.read_exact(&mut header)?;
        if &header[0..4] != b"SFGD" {
            return Err(Error::Format("missing SFGD magic".into()));
        }
        let word = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let float = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported SFGD version {version}")));
        }
        let spec = GridSpec::new(word(8) as usize, word(12) as usize, float(16))?;
        let time = float(24);
        let mut body = vec![0u8; spec.len() * 8];
        input.read_exact(&mut body)?;
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { spec, values, time })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Binary format version shared by the density and particle dumps.
pub const FORMAT_VERSION: u32 = 1;

/// `exp(-1 / (1 - s))` for `s < 1`, else 0.
pub fn bump_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s)).exp()
    }
}

pub fn lp_norm(values: &[f64], cell_volume: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return values.iter().map(|v| v.abs()).sum::<f64>() * cell_volume;
    }
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell_volume).powf(1.0 / p)
}
