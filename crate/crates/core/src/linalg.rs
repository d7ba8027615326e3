//! Dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{CesError, Result};

/// Relative asymmetry tolerance accepted before a matrix is treated as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

/// Returns the symmetric part of `a` after checking that `a` is symmetric to [`SYMMETRY_TOL`].
pub fn symmetrize_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(CesError::InvalidDimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(CesError::NotSymmetric(asym));
    }
    Ok(symmetrize(a))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = symmetrize_checked(a)?;
    let chol = a
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = symmetrize_checked(a)?;
    let chol = a
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

pub fn log_det_spd(a: &DMatrix<f64>) -> Result<f64> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn eigen_checked(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-14 * max.max(1e-300))) {
        return Err(CesError::NotPositiveDefinite(format!(
            "smallest eigenvalue {:.3e}",
            eig.eigenvalues.min()
        )));
    }
    Ok(eig)
}

fn eigen_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let eig = eigen_checked(a)?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    Ok(symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

/// Symmetric positive square root.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    eigen_map(a, f64::sqrt)
}

/// Symmetric inverse square root.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    eigen_map(a, |l| 1.0 / l.sqrt())
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().cloned().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().cloned().unwrap_or(f64::NAN)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().cloned().unwrap_or(f64::NAN)
}

/// Toeplitz matrix with entries `rho^|i-j|`.
pub fn toeplitz(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// `‖a - b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_frobenius_identity(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    rel_frobenius(a, &DMatrix::identity(n, n))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Numerical rank from singular values with an absolute tolerance.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    a.clone().svd(false, false).singular_values.iter().filter(|&&s| s > tol).count()
}

/// Orthogonal projector onto the column space of `a`.
pub fn column_projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = a.transpose() * a;
    Ok(a * spd_solve(&gram, &a.transpose())?)
}

pub fn quad_form(x: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    x.dot(&(a * x))
}
