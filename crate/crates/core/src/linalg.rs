//! Symmetric-matrix utilities.
//!
//! Every matrix function here is a spectral function evaluated through a
//! symmetric eigendecomposition, and every result is re-symmetrized before it
//! is returned. Inputs whose smallest eigenvalue is not above
//! `SPD_REL_TOL * max_eigenvalue` are rejected as not positive definite.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is treated as singular.
pub const SPD_REL_TOL: f64 = 1e-12;

/// A real symmetric matrix. Symmetry is exact: the constructor averages the
/// input with its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

/// Extreme eigenvalues of a symmetric matrix and the resulting definiteness
/// verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpdCheck {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub is_spd: bool,
}

impl SpdCheck {
    fn from_eigenvalues(values: &DVector<f64>) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        SpdCheck {
            min_eigenvalue: min,
            max_eigenvalue: max,
            is_spd: min.is_finite() && max.is_finite() && min > SPD_REL_TOL * max,
        }
    }
}

impl SymMatrix {
    /// Symmetrizes `m`; fails if `m` is not square or is empty.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        symmetrize(&m)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn scalar(value: f64) -> Self {
        SymMatrix(DMatrix::from_element(1, 1, value))
    }

    /// Builds a matrix from row vectors; rows must all have the same length
    /// as the number of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::NotSquare { rows: 0, cols: 0 });
        }
        for row in rows {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        symmetrize(&DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    /// `self + s * I`.
    pub fn shift(&self, s: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] += s;
        }
        SymMatrix(m)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// The symmetric product `outer * inner * outer`.
    pub fn congruence(outer: &SymMatrix, inner: &SymMatrix) -> SymMatrix {
        SymMatrix::sym_part(&(&outer.0 * &inner.0 * &outer.0))
    }

    /// `t^T * self * t` for an arbitrary square `t`.
    pub fn conjugate_by(&self, t: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::sym_part(&(t.transpose() * &self.0 * t))
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    pub fn sqrt(&self) -> Result<SymMatrix> {
        sqrt_spd(self)
    }

    pub fn inv(&self) -> Result<SymMatrix> {
        inv_spd(self)
    }

    pub fn inv_sqrt(&self) -> Result<SymMatrix> {
        self.spectral_map(|l| 1.0 / l.sqrt())
    }

    pub fn logdet(&self) -> Result<f64> {
        logdet_spd(self)
    }

    pub fn spd_check(&self) -> SpdCheck {
        spd_check(self)
    }

    /// Applies `f` to each eigenvalue, after checking positive definiteness.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
        let eig = SymmetricEigen::new(self.0.clone());
        let check = SpdCheck::from_eigenvalues(&eig.eigenvalues);
        if !check.is_spd {
            return Err(Error::NotPositiveDefinite(check));
        }
        let mapped = eig.eigenvalues.map(f);
        let v = &eig.eigenvectors;
        let m = v * DMatrix::from_diagonal(&mapped) * v.transpose();
        Ok(SymMatrix::sym_part(&m))
    }

    /// Solves `self * x = rhs` for an SPD `self` by Cholesky factorization.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self.0.clone().cholesky() {
            Some(chol) => Ok(chol.solve(rhs)),
            None => Err(Error::NotPositiveDefinite(self.spd_check())),
        }
    }

    fn sym_part(m: &DMatrix<f64>) -> SymMatrix {
        SymMatrix((m + m.transpose()) * 0.5)
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Returns `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<SymMatrix> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(SymMatrix::sym_part(m))
}

/// Principal square root.
pub fn sqrt_spd(m: &SymMatrix) -> Result<SymMatrix> {
    m.spectral_map(f64::sqrt)
}

pub fn inv_spd(m: &SymMatrix) -> Result<SymMatrix> {
    m.spectral_map(|l| 1.0 / l)
}

pub fn logdet_spd(m: &SymMatrix) -> Result<f64> {
    let eig = SymmetricEigen::new(m.0.clone());
    let check = SpdCheck::from_eigenvalues(&eig.eigenvalues);
    if !check.is_spd {
        return Err(Error::NotPositiveDefinite(check));
    }
    Ok(eig.eigenvalues.iter().map(|l| l.ln()).sum())
}

pub fn spd_check(m: &SymMatrix) -> SpdCheck {
    SpdCheck::from_eigenvalues(&m.0.symmetric_eigenvalues())
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}
