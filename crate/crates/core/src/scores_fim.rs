//! Score vectors and Fisher information matrices.
//!
//! Two coordinate systems are supported: the shape/scale split
//! `η = (μ, ovecs V, s)` with `Σ = s V`, and arbitrary parameterizations
//! `θ ↦ (μ(θ), Σ(θ))` described by a [`Parameterization`].

use nalgebra::{DMatrix, DVector};

use crate::adaptivity::Parameterization;
use crate::elliptical::DensityGenerator;
use crate::error::{CesError, Result};
use crate::linalg;
use crate::matcalc;
use crate::scale_shape::{ScaleFunctional, ShapeGeometry};

/// FIM blocks in `η = (μ, ovecs V, s)` coordinates.
///
/// The cross blocks `I_{μ,V}` and `I_{μ,s}` vanish identically and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBlocksEta {
    pub m: usize,
    pub i_mu: DMatrix<f64>,
    pub i_v: DMatrix<f64>,
    pub i_s: f64,
    pub i_vs: DVector<f64>,
}

impl FimBlocksEta {
    /// The full symmetric matrix in `(μ, ovecs V, s)` order.
    pub fn assemble(&self) -> DMatrix<f64> {
        let m = self.m;
        let p = self.i_v.nrows();
        let d = m + p + 1;
        let mut f = DMatrix::zeros(d, d);
        f.view_mut((0, 0), (m, m)).copy_from(&self.i_mu);
        f.view_mut((m, m), (p, p)).copy_from(&self.i_v);
        f.view_mut((m, m + p), (p, 1)).copy_from(&self.i_vs);
        f.view_mut((m + p, m), (1, p)).copy_from(&self.i_vs.transpose());
        f[(d - 1, d - 1)] = self.i_s;
        f
    }

    /// `I_V - I_{V,s} I_s⁻¹ I_{V,s}ᵀ`.
    pub fn shape_schur(&self) -> DMatrix<f64> {
        &self.i_v - &self.i_vs * self.i_vs.transpose() / self.i_s
    }
}

struct Whitened {
    q: f64,
    /// `φ̄(Q)`, `None` when `Q = 0`.
    phi: Option<f64>,
    /// `Σ⁻¹ (x - μ)`
    sinv_y: DVector<f64>,
}

fn whiten(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
    gen: &DensityGenerator,
) -> Result<Whitened> {
    let y = x - mu;
    let sinv_y = sigma_inv * &y;
    let q = y.dot(&sinv_y).max(0.0);
    let phi = if q > 0.0 { Some(gen.phi_bar(q, y.len())?) } else { None };
    Ok(Whitened { q, phi, sinv_y })
}

/// Score in `η = (μ, ovecs V, s)` coordinates at a single observation.
pub fn score_eta(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    v: &DMatrix<f64>,
    s: f64,
    kind: ScaleFunctional,
    gen: &DensityGenerator,
) -> Result<DVector<f64>> {
    let geo = ShapeGeometry::new(kind, v)?;
    score_eta_geo(x, mu, &geo, s, gen)
}

pub(crate) fn score_eta_geo(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    geo: &ShapeGeometry,
    s: f64,
    gen: &DensityGenerator,
) -> Result<DVector<f64>> {
    let m = geo.m();
    let sigma = &geo.v * s;
    let sigma_inv = linalg::spd_inverse(&sigma)?;
    let v_inv = &sigma_inv * s;
    let w = whiten(x, mu, &sigma_inv, gen)?;
    let (s_mu, q_phi) = match w.phi {
        Some(phi) => (&w.sinv_y * phi, w.q * phi),
        None => (DVector::zeros(m), 0.0),
    };
    // ½ V^{-1/2}(Qφ̄ uuᵀ - I)V^{-1/2} = ½(φ̄ s⁻¹ V⁻¹yyᵀV⁻¹ - V⁻¹)
    let g = match w.phi {
        Some(phi) => (&w.sinv_y * w.sinv_y.transpose() * (phi * s) - &v_inv) * 0.5,
        None => -&v_inv * 0.5,
    };
    let s_v = &geo.m_mat * matcalc::vec(&g);
    let s_s = (q_phi - m as f64) / (2.0 * s);
    let p = s_v.len();
    let mut out = DVector::zeros(m + p + 1);
    out.rows_mut(0, m).copy_from(&s_mu);
    out.rows_mut(m, p).copy_from(&s_v);
    out[m + p] = s_s;
    Ok(out)
}

/// Score with respect to `vecs(Σ)`.
pub fn score_vecs_sigma(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gen: &DensityGenerator,
) -> Result<DVector<f64>> {
    let m = sigma.nrows();
    let sigma_inv = linalg::spd_inverse(sigma)?;
    let w = whiten(x, mu, &sigma_inv, gen)?;
    let g = match w.phi {
        Some(phi) => (&w.sinv_y * w.sinv_y.transpose() * phi - &sigma_inv) * 0.5,
        None => -&sigma_inv * 0.5,
    };
    Ok(matcalc::duplication_matrix(m)?.transpose() * matcalc::vec(&g))
}

/// Analytic FIM blocks in `η` coordinates.
pub fn fim_eta(
    mu: &DVector<f64>,
    v: &DMatrix<f64>,
    s: f64,
    kind: ScaleFunctional,
    gen: &DensityGenerator,
    m: usize,
) -> Result<FimBlocksEta> {
    if mu.len() != m || v.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    let geo = ShapeGeometry::new(kind, v)?;
    fim_eta_geo(&geo, s, gen)
}

pub(crate) fn fim_eta_geo(geo: &ShapeGeometry, s: f64, gen: &DensityGenerator) -> Result<FimBlocksEta> {
    let m = geo.m();
    let mf = m as f64;
    let c = gen.coefficients(m)?;
    let alpha = c.alpha;
    let v_inv = linalg::spd_inverse(&geo.v)?;
    let vec_vinv = matcalc::vec(&v_inv);
    let kron = linalg::kron(&v_inv, &v_inv);
    let inner = kron * (2.0 * alpha) + &vec_vinv * vec_vinv.transpose() * (alpha - 1.0);
    let i_v = linalg::symmetrize(&(&geo.m_mat * inner * geo.m_mat.transpose() * 0.25));
    let i_s = (mf * (mf + 2.0) * alpha - mf * mf) / (4.0 * s * s);
    let i_vs = &geo.m_mat * &vec_vinv * (((mf + 2.0) * alpha - mf) / (4.0 * s));
    Ok(FimBlocksEta { m, i_mu: &v_inv * (c.beta / s), i_v, i_s, i_vs })
}

/// Semiparametric efficient FIM of the shape,
/// `(α/2) M_S [(V⁻¹⊗V⁻¹) - m⁻¹ vec(V⁻¹) vec(V⁻¹)ᵀ] M_Sᵀ`.
pub fn efficient_fim_shape(
    v: &DMatrix<f64>,
    kind: ScaleFunctional,
    gen: &DensityGenerator,
    m: usize,
) -> Result<DMatrix<f64>> {
    if v.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    let geo = ShapeGeometry::new(kind, v)?;
    efficient_fim_shape_geo(&geo, gen)
}

pub(crate) fn efficient_fim_shape_geo(geo: &ShapeGeometry, gen: &DensityGenerator) -> Result<DMatrix<f64>> {
    let m = geo.m();
    let alpha = gen.coefficients(m)?.alpha;
    let v_inv = linalg::spd_inverse(&geo.v)?;
    let vec_vinv = matcalc::vec(&v_inv);
    let inner = linalg::kron(&v_inv, &v_inv) - &vec_vinv * vec_vinv.transpose() / m as f64;
    Ok(linalg::symmetrize(&(&geo.m_mat * inner * geo.m_mat.transpose() * (0.5 * alpha))))
}

/// FIM of `vecs(Σ)`, `D_mᵀ[½α(Σ⁻¹⊗Σ⁻¹) + ¼(α-1) vecΣ⁻¹ vecΣ⁻¹ᵀ] D_m`.
pub fn fim_vecs_sigma(sigma: &DMatrix<f64>, gen: &DensityGenerator, m: usize) -> Result<DMatrix<f64>> {
    if sigma.nrows() != m {
        return Err(CesError::InvalidDimension(format!("expected dimension {m}")));
    }
    let alpha = gen.coefficients(m)?.alpha;
    let d = matcalc::duplication_matrix(m)?;
    let sinv = linalg::spd_inverse(sigma)?;
    let vs = matcalc::vec(&sinv);
    let inner = linalg::kron(&sinv, &sinv) * (0.5 * alpha) + &vs * vs.transpose() * (0.25 * (alpha - 1.0));
    Ok(linalg::symmetrize(&(d.transpose() * inner * d)))
}

/// Per-parameter derivative data of a parameterization at `θ₀`.
struct ThetaPoint {
    m: usize,
    sigma_inv: DMatrix<f64>,
    mu: DVector<f64>,
    jac_mu: DMatrix<f64>,
    /// `∂Σ/∂θ_i`
    d_sigma: Vec<DMatrix<f64>>,
    /// `tr(Σ⁻¹ Σ_i)`
    traces: Vec<f64>,
}

fn theta_point(param: &Parameterization, theta0: &DVector<f64>, m: usize) -> Result<ThetaPoint> {
    if param.m != m || theta0.len() != param.d {
        return Err(CesError::InvalidDimension(format!(
            "parameterization has m = {}, d = {}; got m = {m}, theta of length {}",
            param.m,
            param.d,
            theta0.len()
        )));
    }
    let sigma = param.sigma(theta0);
    let sigma_inv = linalg::spd_inverse(&sigma)?;
    let jac_mu = param.jacobian_mu(theta0);
    let jac_vs = param.jacobian_vec_sigma(theta0);
    let mut stacked = DMatrix::zeros(m + m * m, param.d);
    stacked.rows_mut(0, m).copy_from(&jac_mu);
    stacked.rows_mut(m, m * m).copy_from(&jac_vs);
    let sv = stacked.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if sv.iter().filter(|&&x| x > 1e-10 * smax.max(1e-300)).count() < param.d {
        return Err(CesError::Identifiability(format!(
            "stacked Jacobian of '{}' is rank deficient",
            param.name
        )));
    }
    let d_sigma: Vec<DMatrix<f64>> = (0..param.d)
        .map(|i| DMatrix::from_column_slice(m, m, jac_vs.column(i).as_slice()))
        .collect();
    let traces = d_sigma.iter().map(|si| (&sigma_inv * si).trace()).collect();
    Ok(ThetaPoint { m, sigma_inv, mu: param.mu(theta0), jac_mu, d_sigma, traces })
}

fn fim_theta_with(tp: &ThetaPoint, alpha: f64, beta: f64, rank_one: f64) -> DMatrix<f64> {
    let d = tp.d_sigma.len();
    let loc = tp.jac_mu.transpose() * &tp.sigma_inv * &tp.jac_mu * beta;
    let whitened: Vec<DMatrix<f64>> = tp.d_sigma.iter().map(|si| &tp.sigma_inv * si).collect();
    let mut f = loc;
    for i in 0..d {
        for j in 0..=i {
            let tr = (&whitened[i] * &whitened[j]).trace();
            let val = 0.5 * alpha * (tr + rank_one * tp.traces[i] * tp.traces[j]);
            f[(i, j)] += val;
            if i != j {
                f[(j, i)] += val;
            }
        }
    }
    linalg::symmetrize(&f)
}

/// Parametric FIM of a parameterized model.
pub fn fim_theta(
    param: &Parameterization,
    theta0: &DVector<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<DMatrix<f64>> {
    let tp = theta_point(param, theta0, m)?;
    let c = gen.coefficients(m)?;
    Ok(fim_theta_with(&tp, c.alpha, c.beta, 0.5 * (1.0 - 1.0 / c.alpha)))
}

/// Semiparametric FIM of a parameterized model (density generator unknown).
pub fn sfim_theta(
    param: &Parameterization,
    theta0: &DVector<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<DMatrix<f64>> {
    let tp = theta_point(param, theta0, m)?;
    let c = gen.coefficients(m)?;
    let sq2 = gen.sigma_q2(m)?;
    Ok(fim_theta_with(&tp, c.alpha, c.beta, 2.0 / (c.alpha * sq2) - 1.0 / m as f64))
}

/// Parametric score of a parameterized model at one observation.
pub fn score_theta(
    x: &DVector<f64>,
    param: &Parameterization,
    theta0: &DVector<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<DVector<f64>> {
    let tp = theta_point(param, theta0, m)?;
    let w = whiten(x, &tp.mu, &tp.sigma_inv, gen)?;
    let mut out = DVector::zeros(tp.d_sigma.len());
    for (i, si) in tp.d_sigma.iter().enumerate() {
        let mut val = -0.5 * tp.traces[i];
        if let Some(phi) = w.phi {
            let loc = w.sinv_y.dot(&tp.jac_mu.column(i));
            let quad = w.sinv_y.dot(&(si * &w.sinv_y));
            val += phi * (loc + 0.5 * quad);
        }
        out[i] = val;
    }
    Ok(out)
}

/// Semiparametric efficient score of a parameterized model at one observation.
pub fn efficient_score_theta(
    x: &DVector<f64>,
    param: &Parameterization,
    theta0: &DVector<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<DVector<f64>> {
    let tp = theta_point(param, theta0, m)?;
    let sq2 = gen.sigma_q2(m)?;
    let mf = tp.m as f64;
    let w = whiten(x, &tp.mu, &tp.sigma_inv, gen)?;
    let mut out = DVector::zeros(tp.d_sigma.len());
    for (i, si) in tp.d_sigma.iter().enumerate() {
        let tr = tp.traces[i];
        let mut val = tr * (w.q - mf) / sq2;
        if let Some(phi) = w.phi {
            let loc = w.sinv_y.dot(&tp.jac_mu.column(i));
            let quad = w.sinv_y.dot(&(si * &w.sinv_y));
            val += phi * loc + 0.5 * phi * (quad - w.q * tr / mf);
        }
        out[i] = val;
    }
    Ok(out)
}

/// Schur complement `I_γ - I_{γξ} I_ξ⁻¹ I_{γξ}ᵀ` of the leading `q x q` block.
pub fn efficient_fim_interest(fim: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    let d = fim.nrows();
    if fim.ncols() != d || q == 0 || q > d {
        return Err(CesError::InvalidDimension(format!(
            "interest block of size {q} in a {}x{} matrix",
            d,
            fim.ncols()
        )));
    }
    let fim = linalg::symmetrize_checked(fim)?;
    let i_g = fim.view((0, 0), (q, q)).into_owned();
    if q == d {
        return Ok(i_g);
    }
    let r = d - q;
    let i_gx = fim.view((0, q), (q, r)).into_owned();
    let i_x = fim.view((q, q), (r, r)).into_owned();
    let sol = linalg::spd_solve(&i_x, &i_gx.transpose())
        .map_err(|_| CesError::Singular("nuisance block of the FIM".into()))?;
    Ok(linalg::symmetrize(&(i_g - i_gx * sol)))
}
