use crate::error::{Error, Result};

/// Smooth radial cutoff `ζ_δ(x) = ζ(|x| / δ)` with `ζ = 0` on the unit ball and
/// `ζ = 1` outside the ball of radius 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationCutoff {
    delta: f64,
}

fn bump_tail(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C^∞ step from 0 at `t <= 0` to 1 at `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = bump_tail(t);
    a / (a + bump_tail(1.0 - t))
}

impl TruncationCutoff {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("cutoff.delta", "must be positive and finite"));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `ζ_δ` as a function of the radius.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        smooth_step(r / self.delta - 1.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// `χ_δ = 1 - ζ_δ`, supported in the ball of radius `2δ`.
    #[inline]
    pub fn complement(&self, r: f64) -> f64 {
        let t = r / self.delta - 1.0;
        smooth_step(1.0 - t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let c = TruncationCutoff::new(0.1).unwrap();
        assert_eq!(c.eval(&[0.05, 0.0, 0.0]), 0.0);
        assert_eq!(c.eval(&[0.0, 0.3, 0.0]), 1.0);
        let v = c.radial(0.15);
        assert!(v > 0.0 && v < 1.0);
        assert!((c.radial(0.15) - 0.5).abs() < 1e-15);
        assert!(TruncationCutoff::new(0.0).is_err());
    }

    #[test]
    fn monotone_and_complementary() {
        let c = TruncationCutoff::new(0.1).unwrap();
        let mut prev = 0.0;
        for i in 0..=400 {
            let r = 0.3 * i as f64 / 400.0;
            let v = c.radial(r);
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            assert!((v + c.complement(r) - 1.0).abs() < 1e-15);
            prev = v;
        }
    }
}
