//! Vectorization operators and the structural matrices of matrix calculus.
//!
//! `vec` stacks columns (column-major). `vecs` stacks the lower triangle
//! column by column, so for `m = 2` it returns `(a11, a21, a22)`. `ovecs`
//! drops the leading `a11` entry of `vecs`.
//!
//! * [`duplication_matrix`] `D_m` satisfies `D_m vecs(A) = vec(A)` for symmetric `A`.
//! * [`commutation_matrix`] `K_m` satisfies `K_m vec(A) = vec(Aᵀ)`.
//! * [`dup_pinv`] is the Moore-Penrose inverse `D_m^# = (D_mᵀ D_m)⁻¹ D_mᵀ`.
//! * [`row_selector`] is the identity of order `m(m+1)/2` with its first row removed.

use nalgebra::{DMatrix, DVector};

use crate::error::{CesError, Result};

/// Number of free entries of an `m x m` symmetric matrix.
pub fn half_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Recovers `m` from `m(m+1)/2`.
pub fn dim_from_half_len(len: usize) -> Result<usize> {
    let m = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if half_len(m) != len {
        return Err(CesError::InvalidDimension(format!(
            "{len} is not a triangular number"
        )));
    }
    Ok(m)
}

/// Position of entry `(i, j)`, `i >= j`, inside `vecs`.
pub fn vecs_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // column j of the lower triangle starts at sum_{k<j} (m - k)
    j * (2 * m - j + 1) / 2 + (i - j)
}

/// Which half-vectorization a [`VecHalf`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfKind {
    /// Full lower triangle, `m(m+1)/2` entries.
    Vecs,
    /// Lower triangle without `a11`, `m(m+1)/2 - 1` entries.
    Ovecs,
}

/// Half-vectorized symmetric matrix tagged with its dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VecHalf {
    pub data: DVector<f64>,
    pub m: usize,
    pub kind: HalfKind,
}

impl VecHalf {
    pub fn vecs(a: &DMatrix<f64>) -> Self {
        VecHalf { data: vecs(a), m: a.nrows(), kind: HalfKind::Vecs }
    }

    pub fn ovecs(a: &DMatrix<f64>) -> Self {
        VecHalf { data: ovecs(a), m: a.nrows(), kind: HalfKind::Ovecs }
    }

    /// Drops the leading entry of a `vecs` value.
    pub fn to_ovecs(&self) -> Self {
        match self.kind {
            HalfKind::Ovecs => self.clone(),
            HalfKind::Vecs => VecHalf {
                data: self.data.rows(1, self.data.len() - 1).into_owned(),
                m: self.m,
                kind: HalfKind::Ovecs,
            },
        }
    }

    /// Rebuilds the symmetric matrix; `a11` is required for the `Ovecs` form.
    pub fn to_matrix(&self, a11: Option<f64>) -> Result<DMatrix<f64>> {
        match self.kind {
            HalfKind::Vecs => unvecs(&self.data, self.m),
            HalfKind::Ovecs => {
                let a11 = a11.ok_or_else(|| {
                    CesError::InvalidDimension("ovecs needs the (1,1) entry to rebuild".into())
                })?;
                let mut full = DVector::zeros(self.data.len() + 1);
                full[0] = a11;
                full.rows_mut(1, self.data.len()).copy_from(&self.data);
                unvecs(&full, self.m)
            }
        }
    }
}

/// Column-major vectorization.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a square `m x m` matrix.
pub fn unvec(v: &DVector<f64>, m: usize) -> Result<DMatrix<f64>> {
    if v.len() != m * m {
        return Err(CesError::InvalidDimension(format!(
            "vector of length {} cannot be reshaped to {m}x{m}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(m, m, v.as_slice()))
}

/// Lower-triangle vectorization, column by column.
pub fn vecs(a: &DMatrix<f64>) -> DVector<f64> {
    let m = a.nrows();
    let mut out = Vec::with_capacity(half_len(m));
    for j in 0..m {
        for i in j..m {
            out.push(a[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// `vecs(A)` without its first entry.
pub fn ovecs(a: &DMatrix<f64>) -> DVector<f64> {
    let v = vecs(a);
    v.rows(1, v.len() - 1).into_owned()
}

/// Rebuilds a symmetric matrix from its `vecs`.
pub fn unvecs(v: &DVector<f64>, m: usize) -> Result<DMatrix<f64>> {
    if v.len() != half_len(m) {
        return Err(CesError::InvalidDimension(format!(
            "vecs of a {m}x{m} matrix has {} entries, got {}",
            half_len(m),
            v.len()
        )));
    }
    let mut a = DMatrix::zeros(m, m);
    let mut k = 0;
    for j in 0..m {
        for i in j..m {
            a[(i, j)] = v[k];
            a[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(a)
}

/// `D_m`, of size `m² x m(m+1)/2`.
pub fn duplication_matrix(m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(CesError::InvalidDimension("duplication matrix needs m >= 1".into()));
    }
    let mut d = DMatrix::zeros(m * m, half_len(m));
    let mut k = 0;
    for j in 0..m {
        for i in j..m {
            d[(i + j * m, k)] = 1.0;
            d[(j + i * m, k)] = 1.0;
            k += 1;
        }
    }
    Ok(d)
}

/// `K_m`, of size `m² x m²`.
pub fn commutation_matrix(m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(CesError::InvalidDimension("commutation matrix needs m >= 1".into()));
    }
    let mut k = DMatrix::zeros(m * m, m * m);
    for i in 0..m {
        for j in 0..m {
            k[(i + j * m, j + i * m)] = 1.0;
        }
    }
    Ok(k)
}

/// `D_m^# = (D_mᵀ D_m)⁻¹ D_mᵀ`.
pub fn dup_pinv(m: usize) -> Result<DMatrix<f64>> {
    let d = duplication_matrix(m)?;
    let gram = d.transpose() * &d;
    // DᵀD is diagonal with entries 1 (diagonal of A) or 2 (off-diagonal)
    let chol = gram
        .cholesky()
        .ok_or_else(|| CesError::Singular("DᵀD".into()))?;
    Ok(chol.solve(&d.transpose()))
}

/// Identity of order `m(m+1)/2` without its first row.
pub fn row_selector(m: usize) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(CesError::InvalidDimension("ovecs is undefined for m < 2".into()));
    }
    let n = half_len(m);
    Ok(DMatrix::identity(n, n).rows(1, n - 1).into_owned())
}

/// Bundles the structural matrices for one dimension.
#[derive(Debug, Clone)]
pub struct Structural {
    pub m: usize,
    pub dup: DMatrix<f64>,
    pub dup_pinv: DMatrix<f64>,
    pub commutation: DMatrix<f64>,
    pub selector: DMatrix<f64>,
}

impl Structural {
    pub fn new(m: usize) -> Result<Self> {
        Ok(Structural {
            m,
            dup: duplication_matrix(m)?,
            dup_pinv: dup_pinv(m)?,
            commutation: commutation_matrix(m)?,
            selector: row_selector(m)?,
        })
    }
}
