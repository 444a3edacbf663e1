use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerated negative eigenvalue, relative to the largest diagonal entry.
pub const PSD_SLACK: f64 = 1e-10;

/// Relative size of the ridge added to singular covariance matrices.
pub const SINGULAR_RIDGE: f64 = 1e-10;

/// Symmetric positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CovMatrix {
    inner: DMatrix<f64>,
}

impl CovMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let sym = Self::symmetrized(matrix)?;
        let min = min_eigenvalue(&sym);
        let max_diag = sym.diagonal().iter().copied().fold(0.0, f64::max);
        if min < -PSD_SLACK * max_diag.max(f64::MIN_POSITIVE) {
            return Err(invalid(format!(
                "matrix is not positive semidefinite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Self { inner: sym })
    }

    /// Skips the eigenvalue check; only symmetry and finiteness are enforced.
    pub(crate) fn new_unchecked_psd(matrix: DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            inner: Self::symmetrized(matrix)?,
        })
    }

    fn symmetrized(matrix: DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(invalid(format!(
                "covariance must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariance has non-finite entries"));
        }
        let scale = matrix.amax().max(1.0);
        let dim = matrix.nrows();
        for i in 0..dim {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok((&matrix + matrix.transpose()) * 0.5)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("covariance rows must form a square matrix"));
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.inner.row(i).iter().copied().collect())
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.inner)
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn with_ridge(&self, ridge: f64) -> Self {
        let dim = self.dim();
        Self {
            inner: &self.inner + DMatrix::identity(dim, dim) * ridge,
        }
    }

    /// Adds `1e-10 · trace` to the diagonal when the smallest eigenvalue is not
    /// positive; returns the ridge that was applied, if any.
    pub fn regularized(&self) -> (Self, Option<f64>) {
        if self.min_eigenvalue() > 0.0 {
            return (self.clone(), None);
        }
        let ridge = SINGULAR_RIDGE * self.trace().max(f64::MIN_POSITIVE);
        (self.with_ridge(ridge), Some(ridge))
    }

    /// Replaces every diagonal band by its mean. Returns the projection and the
    /// Frobenius norm of the change.
    pub fn toeplitz_projection(&self) -> (Self, f64) {
        let dim = self.dim();
        let band_means: Vec<f64> = (0..dim)
            .map(|h| (0..dim - h).map(|i| self.inner[(i, i + h)]).sum::<f64>() / (dim - h) as f64)
            .collect();
        let projected = DMatrix::from_fn(dim, dim, |i, j| band_means[i.abs_diff(j)]);
        let deviation = (&projected - &self.inner).norm();
        (Self { inner: projected }, deviation)
    }

    /// Largest absolute difference between entries on a common diagonal band.
    pub fn toeplitz_defect(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0_f64;
        for i in 1..dim {
            for j in 1..dim {
                worst = worst.max((self.inner[(i, j)] - self.inner[(i - 1, j - 1)]).abs());
            }
        }
        worst
    }
}

impl TryFrom<Vec<Vec<f64>>> for CovMatrix {
    type Error = crate::Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<CovMatrix> for Vec<Vec<f64>> {
    fn from(c: CovMatrix) -> Self {
        c.to_rows()
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
