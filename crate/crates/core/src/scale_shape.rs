//! Scale functionals and the geometry of the shape manifold `{V : S(V) = 1}`.
//!
//! A scatter matrix splits as `Σ = s V` with `s = S(Σ)` and `V = Σ / S(Σ)`.
//! The shape is parameterized by `ovecs(V)`: the entry `[V]₁₁` is a function
//! of the others through the constraint.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CesError, Result};
use crate::linalg;
use crate::matcalc::{self, Structural};

/// Tolerance on `|S(V) - 1|` accepted for inputs that must lie on the manifold.
pub const MANIFOLD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleFunctional {
    /// `[Σ]₁₁`
    FirstElement,
    /// `tr(Σ) / m`
    NormalizedTrace,
    /// `|Σ|^{1/m}`
    DetRoot,
}

impl ScaleFunctional {
    pub const ALL: [ScaleFunctional; 3] =
        [ScaleFunctional::FirstElement, ScaleFunctional::NormalizedTrace, ScaleFunctional::DetRoot];

    pub fn name(&self) -> &'static str {
        match self {
            ScaleFunctional::FirstElement => "first-element",
            ScaleFunctional::NormalizedTrace => "normalized-trace",
            ScaleFunctional::DetRoot => "det-root",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
    }

    /// `S(Σ)`.
    pub fn value(&self, sigma: &DMatrix<f64>) -> Result<f64> {
        let m = sigma.nrows();
        match self {
            ScaleFunctional::FirstElement => Ok(sigma[(0, 0)]),
            ScaleFunctional::NormalizedTrace => Ok(sigma.trace() / m as f64),
            ScaleFunctional::DetRoot => Ok((linalg::log_det_spd(sigma)? / m as f64).exp()),
        }
    }

    /// `D_S^Σ = ∂S/∂Σ`.
    pub fn gradient(&self, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = sigma.nrows();
        match self {
            ScaleFunctional::FirstElement => {
                let mut g = DMatrix::zeros(m, m);
                g[(0, 0)] = 1.0;
                Ok(g)
            }
            ScaleFunctional::NormalizedTrace => Ok(DMatrix::identity(m, m) / m as f64),
            ScaleFunctional::DetRoot => {
                let s = self.value(sigma)?;
                Ok(linalg::spd_inverse(sigma)? * (s / m as f64))
            }
        }
    }

    /// `∇_{vec Σ} S = vec(D_S^Σ)`.
    pub fn vec_gradient(&self, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(matcalc::vec(&self.gradient(sigma)?))
    }
}

impl fmt::Display for ScaleFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScaleFunctional {
    type Err = CesError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "firstelement" | "first" => Ok(ScaleFunctional::FirstElement),
            "normalizedtrace" | "trace" => Ok(ScaleFunctional::NormalizedTrace),
            "detroot" | "det" | "determinant" => Ok(ScaleFunctional::DetRoot),
            _ => Err(CesError::Config(format!(
                "unknown scale '{s}'; valid options: {}",
                Self::valid_names()
            ))),
        }
    }
}

/// `Σ = s V` with `S(V) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDecomposition {
    pub v: DMatrix<f64>,
    pub s: f64,
    pub scale_kind: ScaleFunctional,
}

impl ShapeDecomposition {
    pub fn scatter(&self) -> DMatrix<f64> {
        &self.v * self.s
    }
}

pub fn scale_value(kind: ScaleFunctional, sigma: &DMatrix<f64>) -> Result<f64> {
    kind.value(sigma)
}

pub fn scale_gradient(kind: ScaleFunctional, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    kind.gradient(sigma)
}

pub fn decompose(kind: ScaleFunctional, sigma: &DMatrix<f64>) -> Result<ShapeDecomposition> {
    let s = kind.value(sigma)?;
    if !(s > 0.0) {
        return Err(CesError::NotPositiveDefinite(format!("scale {s} is not positive")));
    }
    Ok(ShapeDecomposition { v: sigma / s, s, scale_kind: kind })
}

/// Projects `v` onto the manifold by dividing by `S(v)`.
pub fn renormalize(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(decompose(kind, v)?.v)
}

pub fn check_manifold(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<()> {
    let dev = (kind.value(v)? - 1.0).abs();
    if !(dev <= MANIFOLD_TOL) {
        return Err(CesError::ManifoldViolation(dev));
    }
    Ok(())
}

/// Shape-manifold matrices at a point `V`, computed once and shared.
#[derive(Debug, Clone)]
pub struct ShapeGeometry {
    pub kind: ScaleFunctional,
    pub v: DMatrix<f64>,
    pub structural: Structural,
    /// `∇_{ovecs V} [V]₁₁`
    pub grad_v11: DVector<f64>,
    /// `K_V = [∇ᵀ[V]₁₁ ; I]`
    pub k: DMatrix<f64>,
    /// `M_S^V = K_Vᵀ D_mᵀ`
    pub m_mat: DMatrix<f64>,
}

impl ShapeGeometry {
    pub fn new(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<Self> {
        let m = v.nrows();
        if m < 2 {
            return Err(CesError::InvalidDimension("shape geometry needs m >= 2".into()));
        }
        check_manifold(kind, v)?;
        let structural = Structural::new(m)?;
        let grad_v11 = grad_v11_with(&structural, kind, v)?;
        let n = matcalc::half_len(m);
        let mut k = DMatrix::zeros(n, n - 1);
        k.row_mut(0).copy_from(&grad_v11.transpose());
        k.view_mut((1, 0), (n - 1, n - 1)).fill_with_identity();
        let m_mat = k.transpose() * structural.dup.transpose();
        Ok(ShapeGeometry { kind, v: v.clone(), structural, grad_v11, k, m_mat })
    }

    pub fn m(&self) -> usize {
        self.structural.m
    }
}

fn grad_v11_with(st: &Structural, kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<DVector<f64>> {
    // implicit differentiation of S(V) = 1 with respect to ovecs(V)
    let row = st.dup.transpose() * matcalc::vec(&kind.gradient(v)?);
    let lead = row[0];
    if lead.abs() < 1e-300 {
        return Err(CesError::Singular("constraint gradient has no [V]11 component".into()));
    }
    Ok(-(&st.selector * row) / lead)
}

/// `∇_{ovecs V} [V]₁₁` on the manifold.
pub fn grad_v11(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_manifold(kind, v)?;
    grad_v11_with(&Structural::new(v.nrows())?, kind, v)
}

/// `K_V`, of size `m(m+1)/2 x (m(m+1)/2 - 1)`.
pub fn k_matrix(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(ShapeGeometry::new(kind, v)?.k)
}

/// `M_S^V = K_Vᵀ D_mᵀ`, of size `(m(m+1)/2 - 1) x m²`.
pub fn m_matrix(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(ShapeGeometry::new(kind, v)?.m_mat)
}

/// Orthonormal basis of the tangent space of the manifold at `V`, in `vecs` coordinates.
///
/// The tangent directions `vecs(A)` satisfy `tr(D_S^V A) = 0`, i.e. they are
/// orthogonal to `D_mᵀ vec(D_S^V)`. The basis is the trailing columns of the
/// Householder reflector mapping that normal to a multiple of `e₁`, with each
/// column signed so its first nonzero entry is positive.
pub fn u_basis(kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_manifold(kind, v)?;
    let st = Structural::new(v.nrows())?;
    let normal = st.dup.transpose() * matcalc::vec(&kind.gradient(v)?);
    Ok(householder_complement(&normal))
}

pub(crate) fn householder_complement(w: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    let norm = w.norm();
    let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut h_vec = w.clone();
    h_vec[0] += sign * norm;
    let hh = h_vec.norm_squared();
    let h = DMatrix::identity(n, n) - &h_vec * h_vec.transpose() * (2.0 / hh);
    let mut u = h.columns(1, n - 1).into_owned();
    for mut col in u.column_iter_mut() {
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-14).cloned() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    u
}

/// `P_S(V) = I - vec(V) ∇ᵀ_{vec Σ} S(Σ)`, with `V = Σ / S(Σ)`.
pub fn p_projector(kind: ScaleFunctional, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    let d = decompose(kind, sigma)?;
    let g = kind.vec_gradient(sigma)?;
    Ok(DMatrix::identity(m * m, m * m) - matcalc::vec(&d.v) * g.transpose())
}

/// Jacobian of `(ovecs V, s) ↦ vecs(s V)`: `[s K_V , vecs(V)]`.
pub fn jacobian_w(kind: ScaleFunctional, v: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    let geo = ShapeGeometry::new(kind, v)?;
    Ok(jacobian_w_geo(&geo, s))
}

pub(crate) fn jacobian_w_geo(geo: &ShapeGeometry, s: f64) -> DMatrix<f64> {
    let n = matcalc::half_len(geo.m());
    let mut j = DMatrix::zeros(n, n);
    j.columns_mut(0, n - 1).copy_from(&(&geo.k * s));
    j.column_mut(n - 1).copy_from(&matcalc::vecs(&geo.v));
    j
}

/// Jacobian of the inverse map `vecs(Σ) ↦ (ovecs V, s)`.
pub fn jacobian_w_inverse(kind: ScaleFunctional, v: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    check_manifold(kind, v)?;
    let m = v.nrows();
    let st = Structural::new(m)?;
    let sigma = v * s;
    let p = p_projector(kind, &sigma)?;
    let g = kind.vec_gradient(&sigma)?;
    let n = matcalc::half_len(m);
    let mut j = DMatrix::zeros(n, n);
    let top = &st.selector * &st.dup_pinv * p * &st.dup / s;
    j.rows_mut(0, n - 1).copy_from(&top);
    j.row_mut(n - 1).copy_from(&(g.transpose() * &st.dup));
    Ok(j)
}

/// Rebuilds `V` from `ovecs(V)` by solving `S(V) = 1` for `[V]₁₁`.
pub fn complete_shape(kind: ScaleFunctional, ov: &DVector<f64>, m: usize) -> Result<DMatrix<f64>> {
    if ov.len() + 1 != matcalc::half_len(m) {
        return Err(CesError::InvalidDimension(format!(
            "ovecs of a {m}x{m} matrix has {} entries, got {}",
            matcalc::half_len(m) - 1,
            ov.len()
        )));
    }
    let mut full = DVector::zeros(ov.len() + 1);
    full.rows_mut(1, ov.len()).copy_from(ov);
    let mut v = matcalc::unvecs(&full, m)?;
    v[(0, 0)] = match kind {
        ScaleFunctional::FirstElement => 1.0,
        ScaleFunctional::NormalizedTrace => m as f64 - (1..m).map(|i| v[(i, i)]).sum::<f64>(),
        ScaleFunctional::DetRoot => {
            // det(V) is affine in [V]11 with slope equal to the (1,1) cofactor
            let cof = v.view((1, 1), (m - 1, m - 1)).into_owned().determinant();
            if cof.abs() < 1e-300 {
                return Err(CesError::Singular("(1,1) cofactor vanishes".into()));
            }
            (1.0 - v.determinant()) / cof
        }
    };
    Ok(v)
}
