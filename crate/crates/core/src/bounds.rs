//! Closed-form Cramér-Rao and semiparametric bounds.
//!
//! With `α` the generator functional, `c = (α-1)/((m+2)α - m)`, `g = ∇_{vec Σ} S`
//! and `P_S = I - vec(V) gᵀ`:
//!
//! * `CRB(μ) = (s/β) V`
//! * `CRB(ovecs V) = α⁻¹ I_m D^# P_S (I+K)(V⊗V) P_Sᵀ D^#ᵀ I_mᵀ`
//! * `CRB(s) = (2s²/α) [gᵀ(V⊗V)g - c]`
//! * `Ψ = CRB(ovecs V, s) = 2α⁻¹ s I_m D^# P_S (V⊗V) g`
//! * `CRB(vecs Σ) = 2α⁻¹ D^# [(Σ⊗Σ) - c vec Σ vec Σᵀ] D^#ᵀ`
//!
//! The shape bound is simultaneously the semiparametric bound and the
//! parametric bound with unknown scale; it equals the bound with known scale
//! only for the determinant scale.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::elliptical::DensityGenerator;
use crate::error::{CesError, Result};
use crate::linalg;
use crate::matcalc::{self, Structural};
use crate::scale_shape::{self, ScaleFunctional, ShapeGeometry};
use crate::scores_fim::{efficient_fim_shape_geo, fim_eta_geo};

/// Bounds for `(μ, ovecs V, s)` and `vecs Σ` at one model point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub scale_kind: ScaleFunctional,
    pub generator: DensityGenerator,
    pub m: usize,
    pub crb_mu: DMatrix<f64>,
    pub crb_shape: DMatrix<f64>,
    pub crb_scale: f64,
    pub psi_cross: DVector<f64>,
    pub crb_vecs_sigma: DMatrix<f64>,
}

impl BoundSet {
    /// Bound for `(μ, ovecs V, s)` in the same layout as [`crate::FimBlocksEta::assemble`].
    pub fn assemble_eta(&self) -> DMatrix<f64> {
        let m = self.m;
        let p = self.crb_shape.nrows();
        let d = m + p + 1;
        let mut b = DMatrix::zeros(d, d);
        b.view_mut((0, 0), (m, m)).copy_from(&self.crb_mu);
        b.view_mut((m, m), (p, p)).copy_from(&self.crb_shape);
        b.view_mut((m, m + p), (p, 1)).copy_from(&self.psi_cross);
        b.view_mut((m + p, m), (1, p)).copy_from(&self.psi_cross.transpose());
        b[(d - 1, d - 1)] = self.crb_scale;
        b
    }
}

fn rank_one_coeff(alpha: f64, m: usize) -> Result<f64> {
    let mf = m as f64;
    let den = (mf + 2.0) * alpha - mf;
    if den.abs() < 1e-12 {
        return Err(CesError::Singular(format!(
            "alpha = m/(m+2) makes the vecs(Sigma) bound singular (alpha = {alpha})"
        )));
    }
    Ok((alpha - 1.0) / den)
}

/// `CRB(μ) = (s/β) V`.
pub fn crb_location(v: &DMatrix<f64>, s: f64, gen: &DensityGenerator, m: usize) -> Result<DMatrix<f64>> {
    if v.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    let beta = gen.coefficients(m)?.beta;
    Ok(v * (s / beta))
}

/// Semiparametric (and scale-unknown parametric) bound on `ovecs V`.
pub fn crb_shape(kind: ScaleFunctional, v: &DMatrix<f64>, gen: &DensityGenerator, m: usize) -> Result<DMatrix<f64>> {
    if v.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    scale_shape::check_manifold(kind, v)?;
    let st = Structural::new(m)?;
    let alpha = gen.coefficients(m)?.alpha;
    let p = scale_shape::p_projector(kind, v)?;
    let vv = linalg::kron(v, v);
    let ik = DMatrix::identity(m * m, m * m) + &st.commutation;
    let left = &st.selector * &st.dup_pinv * &p;
    Ok(linalg::symmetrize(&(&left * ik * vv * left.transpose() / alpha)))
}

/// Determinant-scale form `α⁻¹ I_m D^# [(I+K)(V⊗V) - (2/m) vec V vec Vᵀ] D^#ᵀ I_mᵀ`.
pub fn crb_shape_detroot(v: &DMatrix<f64>, gen: &DensityGenerator, m: usize) -> Result<DMatrix<f64>> {
    scale_shape::check_manifold(ScaleFunctional::DetRoot, v)?;
    let st = Structural::new(m)?;
    let alpha = gen.coefficients(m)?.alpha;
    let vecv = matcalc::vec(v);
    let ik = DMatrix::identity(m * m, m * m) + &st.commutation;
    let inner = ik * linalg::kron(v, v) - &vecv * vecv.transpose() * (2.0 / m as f64);
    let left = &st.selector * &st.dup_pinv;
    Ok(linalg::symmetrize(&(&left * inner * left.transpose() / alpha)))
}

/// Scale bound `CRB(s)` and the shape/scale cross term `Ψ`, with `Σ = s V`.
pub fn crb_scale(
    kind: ScaleFunctional,
    v: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<(f64, DVector<f64>)> {
    scale_shape::check_manifold(kind, v)?;
    let s = kind.value(sigma)?;
    if linalg::rel_frobenius(&(v * s), sigma) > 1e-10 {
        return Err(CesError::InvalidDimension("sigma is not s * V".into()));
    }
    let st = Structural::new(m)?;
    let alpha = gen.coefficients(m)?.alpha;
    let c = rank_one_coeff(alpha, m)?;
    let g = kind.vec_gradient(sigma)?;
    let vv = linalg::kron(v, v);
    let vvg = &vv * &g;
    let value = 2.0 * s * s / alpha * (g.dot(&vvg) - c);
    let p = scale_shape::p_projector(kind, v)?;
    let psi = &st.selector * &st.dup_pinv * p * vvg * (2.0 * s / alpha);
    Ok((value, psi))
}

/// Determinant-scale form `4|Σ|^{2/m} / (m [m(α-1) + 2α])`.
pub fn crb_scale_detroot(sigma: &DMatrix<f64>, gen: &DensityGenerator, m: usize) -> Result<f64> {
    let alpha = gen.coefficients(m)?.alpha;
    let mf = m as f64;
    let det_2m = (2.0 * linalg::log_det_spd(sigma)? / mf).exp();
    Ok(4.0 * det_2m / (mf * (mf * (alpha - 1.0) + 2.0 * alpha)))
}

/// `CRB(vecs Σ)`.
pub fn crb_vecs_sigma(sigma: &DMatrix<f64>, gen: &DensityGenerator, m: usize) -> Result<DMatrix<f64>> {
    if sigma.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    let alpha = gen.coefficients(m)?.alpha;
    let c = rank_one_coeff(alpha, m)?;
    let dp = matcalc::dup_pinv(m)?;
    let vs = matcalc::vec(sigma);
    let inner = linalg::kron(sigma, sigma) - &vs * vs.transpose() * c;
    Ok(linalg::symmetrize(&(&dp * inner * dp.transpose() * (2.0 / alpha))))
}

/// Inverse of `I_V`, the shape bound when the scale is known.
pub fn no_nuisance_crb_shape(kind: ScaleFunctional, v: &DMatrix<f64>, gen: &DensityGenerator, m: usize) -> Result<DMatrix<f64>> {
    if v.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    let geo = ShapeGeometry::new(kind, v)?;
    linalg::spd_inverse(&fim_eta_geo(&geo, 1.0, gen)?.i_v)
}

/// All bounds at `Σ` for one scale functional and generator.
pub fn bound_set(kind: ScaleFunctional, sigma: &DMatrix<f64>, gen: &DensityGenerator) -> Result<BoundSet> {
    let m = sigma.nrows();
    let dec = scale_shape::decompose(kind, sigma)?;
    let (crb_scale, psi_cross) = crb_scale(kind, &dec.v, sigma, gen, m)?;
    Ok(BoundSet {
        scale_kind: kind,
        generator: *gen,
        m,
        crb_mu: crb_location(&dec.v, dec.s, gen, m)?,
        crb_shape: crb_shape(kind, &dec.v, gen, m)?,
        crb_scale,
        psi_cross,
        crb_vecs_sigma: crb_vecs_sigma(sigma, gen, m)?,
    })
}

/// One equality of the bound chain and how it was checked.
#[derive(Debug, Clone, Serialize)]
pub struct ChainLink {
    pub name: String,
    /// `"identity"` for equalities that hold for every scale, `"det-root only"` otherwise.
    pub status: String,
    pub expected_equal: bool,
    pub rel_error: f64,
    /// Extreme eigenvalues of the gap (only for the conditional link).
    pub gap_min_eig: Option<f64>,
    pub gap_max_eig: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorChain {
    pub generator: String,
    pub shape_bound_trace: f64,
    pub no_nuisance_trace: f64,
    pub links: Vec<ChainLink>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub scale: String,
    pub m: usize,
    pub generators: Vec<GeneratorChain>,
    pub passed: bool,
}

/// Tolerance for the identity links of the chain.
pub const CHAIN_IDENTITY_TOL: f64 = 1e-8;
/// Tolerance for equality with the known-scale bound.
pub const CHAIN_EQUALITY_TOL: f64 = 1e-10;

/// Checks the chain of shape bounds for each generator.
///
/// The semiparametric bound, the bound with unknown scale and generator, and
/// the bound with unknown scale are all given by [`crb_shape`]; the checks are
/// that it inverts the efficient FIM and the `(V, s)` block of the FIM. The
/// bound with known scale equals it iff the scale is the determinant root;
/// otherwise the gap must be positive semidefinite and nonzero.
pub fn verify_chain(kind: ScaleFunctional, v: &DMatrix<f64>, gens: &[DensityGenerator], m: usize) -> Result<ChainReport> {
    let geo = ShapeGeometry::new(kind, v)?;
    let mut generators = Vec::new();
    for gen in gens {
        let bound = crb_shape(kind, v, gen, m)?;
        let bnorm = bound.norm();
        let efim = efficient_fim_shape_geo(&geo, gen)?;
        let eta = fim_eta_geo(&geo, 1.0, gen)?;
        let p = eta.i_v.nrows();
        let mut vs_block = DMatrix::zeros(p + 1, p + 1);
        vs_block.view_mut((0, 0), (p, p)).copy_from(&eta.i_v);
        vs_block.view_mut((0, p), (p, 1)).copy_from(&eta.i_vs);
        vs_block.view_mut((p, 0), (1, p)).copy_from(&eta.i_vs.transpose());
        vs_block[(p, p)] = eta.i_s;
        let vs_inv = linalg::spd_inverse(&vs_block)?;
        let nuisance_bound = vs_inv.view((0, 0), (p, p)).into_owned();
        let no_nuisance = linalg::spd_inverse(&eta.i_v)?;

        let e1 = linalg::rel_frobenius_identity(&(&bound * &efim));
        let e2 = linalg::rel_frobenius(&nuisance_bound, &bound);
        let gap = &bound - &no_nuisance;
        let e3 = gap.norm() / bnorm;
        let detroot = kind == ScaleFunctional::DetRoot;
        let (gmin, gmax) = (linalg::min_eigenvalue(&gap), linalg::max_eigenvalue(&gap));
        let third_passed = if detroot {
            e3 < CHAIN_EQUALITY_TOL
        } else {
            gmin >= -CHAIN_EQUALITY_TOL * bnorm && gmax > 1e-6 * bnorm
        };
        let links = vec![
            ChainLink {
                name: "SCRB(ovecs V | g) inverts the efficient FIM".into(),
                status: "identity".into(),
                expected_equal: true,
                rel_error: e1,
                gap_min_eig: None,
                gap_max_eig: None,
                passed: e1 < CHAIN_IDENTITY_TOL,
            },
            ChainLink {
                name: "SCRB(ovecs V | g) = CRB(ovecs V | s)".into(),
                status: "identity".into(),
                expected_equal: true,
                rel_error: e2,
                gap_min_eig: None,
                gap_max_eig: None,
                passed: e2 < CHAIN_IDENTITY_TOL,
            },
            ChainLink {
                name: "CRB(ovecs V | s) = CRB(ovecs V)".into(),
                status: "det-root only".into(),
                expected_equal: detroot,
                rel_error: e3,
                gap_min_eig: Some(gmin),
                gap_max_eig: Some(gmax),
                passed: third_passed,
            },
        ];
        generators.push(GeneratorChain {
            generator: gen.name(),
            shape_bound_trace: bound.trace(),
            no_nuisance_trace: no_nuisance.trace(),
            links,
        });
    }
    let passed = generators.iter().all(|g| g.links.iter().all(|l| l.passed));
    Ok(ChainReport { scale: kind.name().into(), m, generators, passed })
}
