//! Special functions and one-dimensional quadrature shared by the kernel
//! constructions and the grid diagnostics.

use std::f64::consts::PI;

pub use libm::{erf, erfc};

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Surface area of the unit sphere in `R^d`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    2.0 * PI.powf(half) / gamma(half)
}

/// Regularized incomplete gamma pair `(P(m/2, x), Q(m/2, x))` for a positive integer `m`.
///
/// Series for `x < m/2 + 1`; otherwise the finite closed forms of `Q` at integer and
/// half-integer orders, which avoid cancellation in the tail.
pub fn gamma_pq_half(m: usize, x: f64) -> (f64, f64) {
    assert!(m > 0, "order must be positive");
    let a = m as f64 / 2.0;
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x < a + 1.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        while term > 1e-17 * sum {
            term *= x / (a + n);
            sum += term;
            n += 1.0;
        }
        let p = (a * x.ln() - x - ln_gamma(a + 1.0)).exp() * sum;
        return (p, 1.0 - p);
    }
    let q = if m % 2 == 0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..m / 2 {
            term *= x / j as f64;
            sum += term;
        }
        (-x).exp() * sum
    } else {
        let mut q = erfc(x.sqrt());
        let mut order = 0.5;
        while order < a {
            q += (order * x.ln() - x - ln_gamma(order + 1.0)).exp();
            order += 1.0;
        }
        q
    };
    (1.0 - q, q)
}

/// Regularized lower incomplete gamma `P(d/2, x)`.
pub fn lower_gamma_half(dim: usize, x: f64) -> f64 {
    gamma_pq_half(dim, x).0
}

/// Non-regularized upper incomplete gamma `Γ(m/2, x)`.
pub fn upper_gamma_half(m: usize, x: f64) -> f64 {
    gamma_pq_half(m, x).1 * gamma(m as f64 / 2.0)
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    lo: f64,
    hi: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

const MAX_PIECES: usize = 4000;

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval: the
/// piece with the largest error estimate is bisected until the summed error
/// meets `max(abs_tol, rel_tol |I|)` or the piece budget is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let (val, err) = kronrod(&f, a, b);
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Piece { lo: a, hi: b, val, err });
    let (mut total, mut total_err) = (val, err);
    while heap.len() < MAX_PIECES {
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            break;
        }
        let (lv, le) = kronrod(&f, worst.lo, mid);
        let (rv, re) = kronrod(&f, mid, worst.hi);
        total += lv + rv - worst.val;
        total_err += le + re - worst.err;
        heap.push(Piece { lo: worst.lo, hi: mid, val: lv, err: le });
        heap.push(Piece { lo: mid, hi: worst.hi, val: rv, err: re });
    }
    // re-sum to shed the drift of the running updates
    heap.iter().map(|p| p.val).sum()
}

/// Adaptive quadrature on `[a, inf)` via the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate(
        |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            let v = f(a + t / u) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Integral of `|x|^{-k}` over the centered unit cube `[-1/2, 1/2]^d`.
///
/// Uses `|x|^{-k} = Γ(k/2)^{-1} ∫ t^{k/2-1} e^{-t|x|^2} dt` so the cube integral
/// factorizes into a product of error functions; closed form for `d = 3, k = 1`.
pub fn cube_integral_power(dim: usize, k: f64) -> f64 {
    if dim == 3 && (k - 1.0).abs() < 1e-15 {
        let s3 = 3f64.sqrt();
        // 8 corner octants of the [0,1/2]^3 cube, each a^2 times the unit-cube value
        let unit = 1.5 * ((s3 + 1.0) / (s3 - 1.0)).ln() - PI / 4.0;
        return 2.0 * unit;
    }
    let d = dim as i32;
    let sp = PI.sqrt();
    // t = s^2 substitution removes the t^{k/2-1} endpoint singularity
    let integrand = |s: f64| {
        if s == 0.0 {
            return if (k - 1.0).abs() < 1e-15 { 2.0 } else { 0.0 };
        }
        let factor = sp * erf(0.5 * s) / s;
        2.0 * s.powf(k - 1.0) * factor.powi(d)
    };
    let head = integrate(integrand, 0.0, 20.0, 1e-14, 1e-13);
    let tail = integrate_to_infinity(integrand, 20.0, 1e-14, 1e-13);
    (head + tail) / gamma(k / 2.0)
}

/// Epstein zeta function `Z(s) = Σ'_{n ∈ Z^d} |n|^{-s}` of the cubic lattice,
/// analytically continued to `0 < s < d` by the theta-function splitting.
///
/// Restricted to integer `0 < s < d`, where the incomplete gammas have closed forms.
pub fn epstein_zeta(dim: usize, order: usize) -> f64 {
    assert!(order > 0 && order < dim, "need 0 < s < d");
    let d = dim as f64;
    let s = order as f64;
    let a1 = s / 2.0;
    let a2 = (d - s) / 2.0;
    let reach: i64 = 6;
    let mut sum = 0.0;
    let mut idx = vec![-reach; dim];
    loop {
        let n2: i64 = idx.iter().map(|v| v * v).sum();
        if n2 > 0 {
            let x = PI * n2 as f64;
            sum += upper_gamma_half(order, x) / x.powf(a1) + upper_gamma_half(dim - order, x) / x.powf(a2);
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                let lambda = sum - 2.0 / (d - s) - 2.0 / s;
                return PI.powf(s / 2.0) / gamma(s / 2.0) * lambda;
            }
            idx[axis] += 1;
            if idx[axis] > reach {
                idx[axis] = -reach;
                axis += 1;
            } else {
                break;
            }
        }
    }
}

/// Median of a slice (average of the two central values for even length).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
