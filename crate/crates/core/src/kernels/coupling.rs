use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling matrix applied to the interaction force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "matrix", rename_all = "lowercase")]
pub enum CouplingMatrix {
    Identity,
    /// Row-major `d x d` matrix with `A^T = -A`.
    Antisymmetric(Vec<Vec<f64>>),
}

impl CouplingMatrix {
    /// Checks antisymmetry and that the matrix is square.
    pub fn antisymmetric(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            for (j, &a) in row.iter().enumerate() {
                if !a.is_finite() {
                    return Err(Error::invalid("coupling.matrix", format!("entry ({i},{j}) is not finite")));
                }
                if (a + rows[j][i]).abs() > 1e-14 * (1.0 + a.abs()) {
                    return Err(Error::invalid(
                        "coupling.matrix",
                        format!("entry ({i},{j}) = {a} but ({j},{i}) = {}", rows[j][i]),
                    ));
                }
            }
        }
        Ok(CouplingMatrix::Antisymmetric(rows))
    }

    /// The planar rotation generator acting on the first two axes.
    pub fn rotation(dim: usize) -> Self {
        let mut rows = vec![vec![0.0; dim]; dim];
        rows[0][1] = -1.0;
        rows[1][0] = 1.0;
        CouplingMatrix::Antisymmetric(rows)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CouplingMatrix::Identity)
    }

    pub fn validate_dim(&self, dim: usize) -> Result<()> {
        match self {
            CouplingMatrix::Identity => Ok(()),
            CouplingMatrix::Antisymmetric(rows) if rows.len() == dim => Ok(()),
            CouplingMatrix::Antisymmetric(rows) => Err(Error::DimensionMismatch {
                expected: dim,
                got: rows.len(),
            }),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.validate_dim(v.len())?;
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked variant for hot loops; `out` must have the same length as `v`.
    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            CouplingMatrix::Identity => out.copy_from_slice(v),
            CouplingMatrix::Antisymmetric(rows) => {
                for (o, row) in out.iter_mut().zip(rows) {
                    *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// Matrix entry `(i, j)`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            CouplingMatrix::Identity => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
            CouplingMatrix::Antisymmetric(rows) => rows[i][j],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_rotation() {
        assert_eq!(CouplingMatrix::Identity.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let r = CouplingMatrix::rotation(3);
        assert_eq!(r.apply(&[1.0, 0.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(r.apply(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_non_antisymmetric() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(CouplingMatrix::antisymmetric(rows).is_err());
        let rows = vec![vec![0.0, 1.0, 0.0], vec![-1.0, 0.0]];
        assert!(CouplingMatrix::antisymmetric(rows).is_err());
    }
}
