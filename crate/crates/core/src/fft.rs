//! Multi-dimensional complex FFT on cubic grids and zero-padded linear convolution.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Separable FFT over a `len^dim` row-major array.
#[derive(Clone)]
pub struct NdFft {
    dim: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NdFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdFft")
            .field("dim", &self.dim)
            .field("len", &self.len)
            .finish()
    }
}

const COLUMN_BATCH: usize = 32;

impl NdFft {
    pub fn new(dim: usize, len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> usize {
        self.len.pow(self.dim as u32)
    }

    /// Unnormalized forward transform `Σ_x f(x) e^{-2πi k·x / len}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1 / len^dim` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.total() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.total(), "buffer does not match the FFT shape");
        let p = self.len;
        for axis in 0..self.dim {
            let stride = p.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                data.par_chunks_mut(p * COLUMN_BATCH.min(data.len() / p))
                    .for_each(|rows| {
                        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                        plan.process_with_scratch(rows, &mut scratch);
                    });
                continue;
            }
            data.par_chunks_mut(p * stride).for_each(|block| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                let mut lines = vec![Complex64::default(); p * COLUMN_BATCH.min(stride)];
                let mut c0 = 0;
                while c0 < stride {
                    let width = COLUMN_BATCH.min(stride - c0);
                    let buf = &mut lines[..p * width];
                    for q in 0..p {
                        let row = &block[q * stride + c0..q * stride + c0 + width];
                        for (c, v) in row.iter().enumerate() {
                            buf[c * p + q] = *v;
                        }
                    }
                    plan.process_with_scratch(buf, &mut scratch);
                    for q in 0..p {
                        let row = &mut block[q * stride + c0..q * stride + c0 + width];
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = buf[c * p + q];
                        }
                    }
                    c0 += width;
                }
            });
        }
    }
}

/// Signed frequency (or lag) of index `m` on a period of `len`.
#[inline]
pub fn signed_index(m: usize, len: usize) -> i64 {
    if m <= len / 2 {
        m as i64
    } else {
        m as i64 - len as i64
    }
}

/// Decomposes a flat row-major index into per-axis indices.
#[inline]
pub fn unflatten(mut flat: usize, len: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % len;
        flat /= len;
    }
}

/// Fourier multiplier stored with only its nonzero part: even real kernels have
/// real spectra and odd real kernels purely imaginary ones.
#[derive(Debug, Clone)]
pub enum Multiplier {
    Real(Vec<f64>),
    Imag(Vec<f64>),
}

impl Multiplier {
    #[inline]
    fn at(&self, m: usize) -> Complex64 {
        match self {
            Multiplier::Real(v) => Complex64::new(v[m], 0.0),
            Multiplier::Imag(v) => Complex64::new(0.0, v[m]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Multiplier::Real(v) | Multiplier::Imag(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Linear (non-periodic) convolution of `n^dim` grid data with a kernel sampled on
/// lags, via FFTs of size `padded >= 2n` per axis.
#[derive(Debug, Clone)]
pub struct PaddedConvolver {
    n: usize,
    fft: NdFft,
}

impl PaddedConvolver {
    pub fn new(dim: usize, n: usize, padded: usize) -> Result<Self> {
        if padded < 2 * n {
            return Err(Error::Unpadded { padded, n });
        }
        Ok(Self {
            n,
            fft: NdFft::new(dim, padded),
        })
    }

    pub fn dim(&self) -> usize {
        self.fft.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn padded(&self) -> usize {
        self.fft.len
    }

    pub fn fft(&self) -> &NdFft {
        &self.fft
    }

    /// Offset of grid row `r` (all axes but the last) inside the padded array.
    fn row_offset(&self, mut r: usize) -> usize {
        let (n, p) = (self.n, self.fft.len);
        let mut off = 0;
        let mut scale = p;
        for _ in 0..self.dim() - 1 {
            off += (r % n) * scale;
            r /= n;
            scale *= p;
        }
        off
    }

    /// Zero-padded complex copy of grid values.
    pub fn embed(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(values.len(), n.pow(self.dim() as u32));
        let mut buf = vec![Complex64::default(); self.fft.total()];
        for (r, row) in values.chunks(n).enumerate() {
            let off = self.row_offset(r);
            for (dst, v) in buf[off..off + n].iter_mut().zip(row) {
                *dst = Complex64::new(*v, 0.0);
            }
        }
        buf
    }

    /// Real and imaginary parts of the grid window of a padded buffer.
    pub fn extract(&self, buf: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let total = n.pow(self.dim() as u32);
        let mut re = vec![0.0; total];
        let mut im = vec![0.0; total];
        for (r, (rrow, irow)) in re.chunks_mut(n).zip(im.chunks_mut(n)).enumerate() {
            let off = self.row_offset(r);
            for (q, v) in buf[off..off + n].iter().enumerate() {
                rrow[q] = v.re;
                irow[q] = v.im;
            }
        }
        (re, im)
    }

    /// Forward transform of the zero-padded grid values.
    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf = self.embed(values);
        self.fft.forward(&mut buf);
        buf
    }

    /// Spectrum of a kernel given on integer lag vectors, scaled by the quadrature
    /// weight `cell_volume`. The lag `±padded/2` slab is never reached by a linear
    /// convolution of `n`-point data and is set to zero.
    pub fn kernel_spectrum<F>(&self, cell_volume: f64, kernel: F) -> Vec<Complex64>
    where
        F: Fn(&[i64]) -> f64 + Sync,
    {
        let d = self.dim();
        let p = self.fft.len;
        let half = (p / 2) as i64;
        let mut buf = vec![Complex64::default(); self.fft.total()];
        buf.par_chunks_mut(p).enumerate().for_each(|(row, out)| {
            let mut idx = vec![0usize; d];
            let mut lag = vec![0i64; d];
            unflatten(row * p, p, &mut idx);
            for (a, l) in lag.iter_mut().enumerate().take(d - 1) {
                *l = signed_index(idx[a], p);
            }
            if lag[..d - 1].iter().any(|l| l.abs() == half) {
                return;
            }
            for (q, v) in out.iter_mut().enumerate() {
                lag[d - 1] = signed_index(q, p);
                if lag[d - 1].abs() == half {
                    continue;
                }
                *v = Complex64::new(cell_volume * kernel(&lag), 0.0);
            }
        });
        self.fft.forward(&mut buf);
        buf
    }

    /// Convolves two real kernels with the same data using one inverse transform:
    /// `IFFT(f̂ (K̂_a + i K̂_b))` has real part `K_a ⋆ f` and imaginary part `K_b ⋆ f`.
    pub fn convolve_pair(
        &self,
        spectrum: &[Complex64],
        first: &Multiplier,
        second: Option<&Multiplier>,
    ) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = spectrum
            .par_iter()
            .enumerate()
            .map(|(m, s)| {
                let mut k = first.at(m);
                if let Some(b) = second {
                    k += i * b.at(m);
                }
                s * k
            })
            .collect();
        self.fft.inverse(&mut buf);
        self.extract(&buf)
    }

    /// Convolution with a single kernel.
    pub fn convolve(&self, spectrum: &[Complex64], kernel: &Multiplier) -> Vec<f64> {
        self.convolve_pair(spectrum, kernel, None).0
    }
}

/// Splits a kernel spectrum into its real or imaginary part by parity.
pub fn split_multiplier(spectrum: Vec<Complex64>, odd: bool) -> Multiplier {
    if odd {
        Multiplier::Imag(spectrum.into_iter().map(|c| c.im).collect())
    } else {
        Multiplier::Real(spectrum.into_iter().map(|c| c.re).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(data: &[Complex64], dim: usize, p: usize) -> Vec<Complex64> {
        let total = data.len();
        let mut out = vec![Complex64::default(); total];
        let mut ki = vec![0; dim];
        let mut xi = vec![0; dim];
        for (k, o) in out.iter_mut().enumerate() {
            unflatten(k, p, &mut ki);
            for (x, v) in data.iter().enumerate() {
                unflatten(x, p, &mut xi);
                let phase: usize = ki.iter().zip(&xi).map(|(a, b)| a * b).sum();
                let ang = -2.0 * std::f64::consts::PI * (phase % p) as f64 / p as f64;
                *o += v * Complex64::from_polar(1.0, ang);
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_in_3d() {
        let p = 6;
        let data: Vec<Complex64> = (0..p * p * p)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut fast = data.clone();
        NdFft::new(3, p).forward(&mut fast);
        let slow = naive_dft(&data, 3, p);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        let fft = NdFft::new(3, p);
        fft.inverse(&mut fast);
        for (a, b) in fast.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn padded_convolution_is_linear() {
        let n = 5;
        let conv = PaddedConvolver::new(2, n, 10).unwrap();
        let f: Vec<f64> = (0..n * n).map(|i| ((i * 7 % 11) as f64) - 3.0).collect();
        let k = |l: &[i64]| 1.0 / (1.0 + (l[0] * l[0] + 2 * l[1] * l[1]) as f64) + 0.1 * l[0] as f64;
        let spec = conv.kernel_spectrum(1.0, k);
        let mult = Multiplier::Real(spec.iter().map(|c| c.re).collect());
        let mult_i = Multiplier::Imag(spec.iter().map(|c| c.im).collect());
        let fs = conv.spectrum(&f);
        // real part of K̂ is the even part of K, the imaginary part the odd part
        let (even, odd) = conv.convolve_pair(&fs, &mult, Some(&mult_i));
        for i in 0..n {
            for j in 0..n {
                let (mut de, mut dodd) = (0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        let lag = [i as i64 - a as i64, j as i64 - b as i64];
                        let neg = [-lag[0], -lag[1]];
                        de += 0.5 * (k(&lag) + k(&neg)) * f[a * n + b];
                        dodd += 0.5 * (k(&lag) - k(&neg)) * f[a * n + b];
                    }
                }
                assert!((even[i * n + j] - de).abs() < 1e-10);
                assert!((odd[i * n + j] - dodd).abs() < 1e-10);
            }
        }
        assert!((conv.convolve(&fs, &mult)[7] - even[7]).abs() < 1e-12);
        assert!(matches!(
            PaddedConvolver::new(3, 8, 15),
            Err(Error::Unpadded { .. })
        ));
    }
}
