//! Small dense helpers shared by the numerical modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol * m.amax().max(1.0)
}

pub fn is_pd(m: &DMatrix<f64>, tol: f64) -> bool {
    m.nrows() > 0 && min_eigenvalue(m) > tol * m.amax().max(1.0)
}

/// Symmetric square root `F` with `F F^T = m`, eigenvalues clamped at zero.
///
/// Eigenvalues below `-1e-12 * max(1, |m|_max)` are rejected.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::dim("psd_sqrt", format!("{n}x{n}"), format!("{n}x{}", m.ncols())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let tol = 1e-12 * m.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(|ev| ev.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * roots * eig.eigenvectors.transpose())
}

/// Solve `m x = rhs` for symmetric positive definite `m`, falling back to LU.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    if let Some(chol) = symmetrize(m).cholesky() {
        return Ok(chol.solve(rhs));
    }
    m.clone().lu().solve(rhs).ok_or(Error::Singular(context))
}

pub fn matrix_power(a: &DMatrix<f64>, exp: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..exp {
        out = &out * a;
    }
    out
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Numerical rank of a complex matrix via singular values, relative tolerance.
pub fn complex_rank(m: &DMatrix<Complex<f64>>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let largest = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * largest).count()
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}
