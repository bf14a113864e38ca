//! Dense complex covariance matrices.

use std::ops::{Add, Index, IndexMut, Sub};

use faer::{c64, Mat, MatRef, Side};

use crate::error::{CovError, Result};

/// Relative tolerance on the smallest eigenvalue when validating PSD-ness.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Square complex matrix holding a spatial covariance (R, Q, Φ) or one of
/// their estimates.
///
/// Model-generated matrices are Hermitian PSD. Estimates (sample R, ALA
/// output at small pilot counts) are Hermitian but may be indefinite, so
/// PSD-ness is checked on demand rather than enforced.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix(Mat<c64>);

impl CovarianceMatrix {
    pub fn new(mat: Mat<c64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(CovError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        Ok(Self(mat))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> c64) -> Self {
        Self(Mat::from_fn(n, n, f))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Mat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    /// Builds a Hermitian matrix from its upper triangle; `f` is only called
    /// for `i <= j` and the lower triangle is the exact conjugate mirror.
    pub fn hermitian_from_upper(n: usize, mut f: impl FnMut(usize, usize) -> c64) -> Self {
        let mut m = Mat::<c64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                if i == j {
                    m[(i, i)] = c64::new(v.re, 0.0);
                } else {
                    m[(i, j)] = v;
                    m[(j, i)] = v.conj();
                }
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn as_mat_mut(&mut self) -> faer::MatMut<'_, c64> {
        self.0.as_mut()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.0
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).sum()
    }

    /// Diagonal part of the matrix, off-diagonal entries zeroed.
    pub fn diagonal(&self) -> Self {
        let n = self.dim();
        Self(Mat::from_fn(n, n, |i, j| {
            if i == j {
                self.0[(i, i)]
            } else {
                c64::new(0.0, 0.0)
            }
        }))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let n = self.dim();
        Self(Mat::from_fn(n, n, |i, j| self.0[(i, j)] * factor))
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<()> {
        self.check_same_dim(other)?;
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                self.0[(i, j)] += other.0[(i, j)] * factor;
            }
        }
        Ok(())
    }

    /// `self += value * I`.
    pub fn add_identity(&mut self, value: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)] += c64::new(value, 0.0);
        }
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(CovError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += self.0[(i, j)].norm_sqr();
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += (self.0[(i, j)] - other.0[(i, j)]).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((self.0[(i, j)] - other.0[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..=j).all(|i| (self.0[(i, j)] - self.0[(j, i)].conj()).norm() <= tol))
    }

    /// True when every entry depends only on `col - row` (within `tol`).
    pub fn is_toeplitz(&self, tol: f64) -> bool {
        let n = self.dim();
        (1..n).all(|j| (1..n).all(|i| (self.0[(i, j)] - self.0[(i - 1, j - 1)]).norm() <= tol))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let h = self.hermitian_part();
        h.0.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| CovError::EigenFailure)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Checks `λ_min >= -tol * max(|λ_max|, 1e-300)`.
    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let eig = self.eigenvalues()?;
        let (Some(&lo), Some(&hi)) = (eig.first(), eig.last()) else {
            return Ok(());
        };
        let scale = hi.abs().max(lo.abs()).max(1e-300);
        if lo < -tol * scale {
            return Err(CovError::NotPositiveSemidefinite { min_eigenvalue: lo });
        }
        Ok(())
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim();
        Self(Mat::from_fn(n, n, |i, j| {
            (self.0[(i, j)] + self.0[(j, i)].conj()) * 0.5
        }))
    }
}

/// Frobenius inner product `Σ conj(a_ij) b_ij`.
pub fn frobenius_inner(a: &CovarianceMatrix, b: &CovarianceMatrix) -> c64 {
    assert_eq!(a.dim(), b.dim(), "dimension mismatch");
    let n = a.dim();
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += a.0[(i, j)].conj() * b.0[(i, j)];
        }
    }
    acc
}

impl Index<(usize, usize)> for CovarianceMatrix {
    type Output = c64;
    fn index(&self, idx: (usize, usize)) -> &c64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for CovarianceMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut c64 {
        &mut self.0[idx]
    }
}

impl Add for &CovarianceMatrix {
    type Output = CovarianceMatrix;
    fn add(self, rhs: Self) -> CovarianceMatrix {
        CovarianceMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CovarianceMatrix {
    type Output = CovarianceMatrix;
    fn sub(self, rhs: Self) -> CovarianceMatrix {
        CovarianceMatrix(&self.0 - &rhs.0)
    }
}
