//! Parameterized elliptical models and the adaptivity condition.
//!
//! A [`Parameterization`] maps `θ = (γ, ξ)` (interest first, nuisance last)
//! to `(μ(θ), Σ(θ))`. The semiparametric efficient FIM of `γ` coincides with
//! the parametric one when
//!
//! `(J_γᵀ[vec Σ] - I_{γξ} I_ξ⁻¹ J_ξᵀ[vec Σ]) vec(Σ⁻¹) = 0`,
//!
//! which [`condition_check`] evaluates. The condition is sufficient for every
//! generator and necessary for every non-Gaussian one.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::elliptical::DensityGenerator;
use crate::error::{CesError, Result};
use crate::linalg;
use crate::matcalc;
use crate::scale_shape::{self, ScaleFunctional, ShapeGeometry};
use crate::scores_fim::{efficient_fim_interest, fim_theta, sfim_theta};

pub type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type MatListFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Central-difference step for coordinate `t`.
pub fn fd_step(t: f64) -> f64 {
    (1e-6_f64).max(1e-6 * t.abs())
}

/// `θ ↦ (μ(θ), Σ(θ))` with optional analytic Jacobians.
#[derive(Clone)]
pub struct Parameterization {
    pub name: String,
    pub m: usize,
    pub d: usize,
    /// Number of interest parameters (the leading `q` entries of `θ`).
    pub q: usize,
    mu_fn: VecFn,
    sigma_fn: MatFn,
    jac_mu: Option<MatFn>,
    jac_vec_sigma: Option<MatFn>,
}

impl fmt::Debug for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Parameterization")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("q", &self.q)
            .field("analytic_jac_mu", &self.jac_mu.is_some())
            .field("analytic_jac_vec_sigma", &self.jac_vec_sigma.is_some())
            .finish()
    }
}

impl Parameterization {
    pub fn new(name: impl Into<String>, m: usize, d: usize, q: usize, mu_fn: VecFn, sigma_fn: MatFn) -> Self {
        Parameterization { name: name.into(), m, d, q, mu_fn, sigma_fn, jac_mu: None, jac_vec_sigma: None }
    }

    pub fn with_jac_mu(mut self, f: MatFn) -> Self {
        self.jac_mu = Some(f);
        self
    }

    pub fn with_jac_vec_sigma(mut self, f: MatFn) -> Self {
        self.jac_vec_sigma = Some(f);
        self
    }

    /// Drops analytic Jacobians so the finite-difference fallback is used.
    pub fn without_analytic_jacobians(mut self) -> Self {
        self.jac_mu = None;
        self.jac_vec_sigma = None;
        self
    }

    pub fn r(&self) -> usize {
        self.d - self.q
    }

    pub fn mu(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.mu_fn)(theta)
    }

    pub fn sigma(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        (self.sigma_fn)(theta)
    }

    /// `J[μ]`, `m x d`.
    pub fn jacobian_mu(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match &self.jac_mu {
            Some(f) => f(theta),
            None => self.fd_jacobian_mu(theta),
        }
    }

    /// `J[vec Σ]`, `m² x d`.
    pub fn jacobian_vec_sigma(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match &self.jac_vec_sigma {
            Some(f) => f(theta),
            None => self.fd_jacobian_vec_sigma(theta),
        }
    }

    fn central_difference(&self, theta: &DVector<f64>, rows: usize, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(rows, self.d);
        for i in 0..self.d {
            let h = fd_step(theta[i]);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            j.column_mut(i).copy_from(&((f(&tp) - f(&tm)) / (2.0 * h)));
        }
        j
    }

    pub fn fd_jacobian_mu(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.central_difference(theta, self.m, |t| self.mu(t))
    }

    pub fn fd_jacobian_vec_sigma(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.central_difference(theta, self.m * self.m, |t| matcalc::vec(&self.sigma(t)))
    }

    /// Linear location `μ = B γ` (interest) and linear scatter `Σ = Σ_k ξ_k B_k` (nuisance).
    pub fn split_linear(mu_basis: DMatrix<f64>, sigma_basis: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = mu_basis.nrows();
        let q = mu_basis.ncols();
        let r = sigma_basis.len();
        if sigma_basis.iter().any(|b| b.nrows() != m || b.ncols() != m) {
            return Err(CesError::InvalidDimension("scatter basis matrices must be m x m".into()));
        }
        let basis = Arc::new(sigma_basis);
        let mb = Arc::new(mu_basis);
        let (b1, b2, mb1, mb2) = (basis.clone(), basis.clone(), mb.clone(), mb.clone());
        Ok(Parameterization::new(
            "split",
            m,
            q + r,
            q,
            Arc::new(move |t: &DVector<f64>| &*mb1 * t.rows(0, q)),
            Arc::new(move |t: &DVector<f64>| {
                b1.iter().enumerate().fold(DMatrix::zeros(m, m), |acc, (k, b)| acc + b * t[q + k])
            }),
        )
        .with_jac_mu(Arc::new(move |_t: &DVector<f64>| {
            let mut j = DMatrix::zeros(m, q + r);
            j.columns_mut(0, q).copy_from(&*mb2);
            j
        }))
        .with_jac_vec_sigma(Arc::new(move |_t: &DVector<f64>| {
            let mut j = DMatrix::zeros(m * m, q + r);
            for (k, b) in b2.iter().enumerate() {
                j.column_mut(q + k).copy_from(&matcalc::vec(b));
            }
            j
        })))
    }

    /// `θ = (μ, ovecs V, s)` with `Σ = s V`; interest `(μ, ovecs V)`, nuisance `s`.
    pub fn shape_scale(kind: ScaleFunctional, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(CesError::InvalidDimension("shape-scale needs m >= 2".into()));
        }
        let p = matcalc::half_len(m) - 1;
        let d = m + p + 1;
        let shape = move |t: &DVector<f64>| {
            scale_shape::complete_shape(kind, &t.rows(m, p).into_owned(), m).expect("valid ovecs")
        };
        Ok(Parameterization::new(
            format!("shape-scale({kind})"),
            m,
            d,
            m + p,
            Arc::new(move |t: &DVector<f64>| t.rows(0, m).into_owned()),
            Arc::new(move |t: &DVector<f64>| shape(t) * t[d - 1]),
        )
        .with_jac_mu(Arc::new(move |_t: &DVector<f64>| {
            let mut j = DMatrix::zeros(m, d);
            j.view_mut((0, 0), (m, m)).fill_with_identity();
            j
        }))
        .with_jac_vec_sigma(Arc::new(move |t: &DVector<f64>| {
            let v = shape(t);
            let s = t[d - 1];
            let geo = ShapeGeometry::new(kind, &v).expect("completed shape is on the manifold");
            let mut j = DMatrix::zeros(m * m, d);
            j.columns_mut(m, p).copy_from(&(&geo.structural.dup * &geo.k * s));
            j.column_mut(d - 1).copy_from(&matcalc::vec(&v));
            j
        })))
    }

    /// The point `θ₀` of [`Parameterization::shape_scale`] matching `(μ, Σ)`.
    pub fn shape_scale_theta(kind: ScaleFunctional, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
        let dec = scale_shape::decompose(kind, sigma)?;
        let ov = matcalc::ovecs(&dec.v);
        let m = mu.len();
        let mut t = DVector::zeros(m + ov.len() + 1);
        t.rows_mut(0, m).copy_from(mu);
        t.rows_mut(m, ov.len()).copy_from(&ov);
        t[m + ov.len()] = dec.s;
        Ok(t)
    }

    /// `θ = (γ, ξ)`, `μ = ξ`, `Σ = γ Σ₀`: a scalar scale of interest with no
    /// compensating nuisance, which violates the adaptivity condition.
    pub fn breaking(sigma0: DMatrix<f64>) -> Self {
        let m = sigma0.nrows();
        let s0 = Arc::new(sigma0);
        let (s1, s2) = (s0.clone(), s0);
        Parameterization::new(
            "breaking",
            m,
            m + 1,
            1,
            Arc::new(move |t: &DVector<f64>| t.rows(1, m).into_owned()),
            Arc::new(move |t: &DVector<f64>| &*s1 * t[0]),
        )
        .with_jac_mu(Arc::new(move |_t: &DVector<f64>| {
            let mut j = DMatrix::zeros(m, m + 1);
            j.view_mut((0, 1), (m, m)).fill_with_identity();
            j
        }))
        .with_jac_vec_sigma(Arc::new(move |_t: &DVector<f64>| {
            let mut j = DMatrix::zeros(m * m, m + 1);
            j.column_mut(0).copy_from(&matcalc::vec(&s2));
            j
        }))
    }
}

/// `Σ(γ, Ξ, λ) = A(γ) Ξ A(γ)ᵀ + λ I` with nuisance `(vecs Ξ, λ)`.
#[derive(Clone)]
pub struct LowRankModel {
    pub m: usize,
    pub p: usize,
    a_fn: MatFn,
    /// `∂A/∂γ_k`, one matrix per interest parameter.
    a_jac: MatListFn,
    pub gamma0: DVector<f64>,
    pub signal_cov: DMatrix<f64>,
    pub noise_level: f64,
}

impl fmt::Debug for LowRankModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LowRankModel")
            .field("m", &self.m)
            .field("p", &self.p)
            .field("gamma0", &self.gamma0)
            .field("signal_cov", &self.signal_cov)
            .field("noise_level", &self.noise_level)
            .finish()
    }
}

impl LowRankModel {
    pub fn new(
        m: usize,
        p: usize,
        a_fn: MatFn,
        a_jac: MatListFn,
        gamma0: DVector<f64>,
        signal_cov: DMatrix<f64>,
        noise_level: f64,
    ) -> Self {
        LowRankModel { m, p, a_fn, a_jac, gamma0, signal_cov, noise_level }
    }

    /// Real steering matrix `A_ik(γ) = cos(ω_i γ_k + φ_i)`, `ω_i = i + 1`, `φ_i = 0.3 i`,
    /// one interest parameter per column.
    pub fn sinusoidal(m: usize, gamma0: DVector<f64>, signal_cov: DMatrix<f64>, noise_level: f64) -> Self {
        let p = gamma0.len();
        let omega = |i: usize| (i + 1) as f64;
        let phase = |i: usize| 0.3 * i as f64;
        LowRankModel::new(
            m,
            p,
            Arc::new(move |g: &DVector<f64>| DMatrix::from_fn(m, p, |i, k| (omega(i) * g[k] + phase(i)).cos())),
            Arc::new(move |g: &DVector<f64>| {
                (0..p)
                    .map(|k| {
                        DMatrix::from_fn(m, p, |i, c| {
                            if c == k {
                                -omega(i) * (omega(i) * g[k] + phase(i)).sin()
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            }),
            gamma0,
            signal_cov,
            noise_level,
        )
    }

    pub fn q(&self) -> usize {
        self.gamma0.len()
    }

    pub fn steering(&self, gamma: &DVector<f64>) -> DMatrix<f64> {
        (self.a_fn)(gamma)
    }

    pub fn steering_derivatives(&self, gamma: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (self.a_jac)(gamma)
    }

    /// `θ₀ = (γ₀, vecs Ξ₀, λ₀)`.
    pub fn theta0(&self) -> DVector<f64> {
        let vx = matcalc::vecs(&self.signal_cov);
        let q = self.q();
        let mut t = DVector::zeros(q + vx.len() + 1);
        t.rows_mut(0, q).copy_from(&self.gamma0);
        t.rows_mut(q, vx.len()).copy_from(&vx);
        t[q + vx.len()] = self.noise_level;
        t
    }
}

/// Parameterization `θ = (γ, vecs Ξ, λ)`, `μ ≡ 0`, of a low-rank model, with analytic Jacobians.
pub fn low_rank_parameterization(model: &LowRankModel) -> Result<Parameterization> {
    let (m, p, q) = (model.m, model.p, model.q());
    let a0 = model.steering(&model.gamma0);
    if a0.nrows() != m || a0.ncols() != p {
        return Err(CesError::InvalidDimension(format!("steering matrix must be {m}x{p}")));
    }
    if linalg::rank(&a0, 1e-10 * a0.norm()) < p {
        return Err(CesError::Identifiability("steering matrix is rank deficient".into()));
    }
    if model.signal_cov.nrows() != p || linalg::min_eigenvalue(&model.signal_cov) <= 0.0 {
        return Err(CesError::NotPositiveDefinite("signal covariance".into()));
    }
    if !(model.noise_level > 0.0) {
        return Err(CesError::Domain("noise level must be positive".into()));
    }
    let nx = matcalc::half_len(p);
    let d = q + nx + 1;
    let dup_p = matcalc::duplication_matrix(p)?;
    let (mf1, mf2) = (model.clone(), model.clone());
    let parts = move |t: &DVector<f64>| {
        let g = t.rows(0, q).into_owned();
        let xi = matcalc::unvecs(&t.rows(q, nx).into_owned(), p).expect("vecs length");
        (g, xi, t[d - 1])
    };
    Ok(Parameterization::new(
        "low-rank",
        m,
        d,
        q,
        Arc::new(move |_t: &DVector<f64>| DVector::zeros(m)),
        Arc::new(move |t: &DVector<f64>| {
            let (g, xi, lam) = parts(t);
            let a = mf1.steering(&g);
            &a * xi * a.transpose() + DMatrix::identity(m, m) * lam
        }),
    )
    .with_jac_mu(Arc::new(move |_t: &DVector<f64>| DMatrix::zeros(m, d)))
    .with_jac_vec_sigma(Arc::new(move |t: &DVector<f64>| {
        let (g, xi, _) = parts(t);
        let a = mf2.steering(&g);
        let da = mf2.steering_derivatives(&g);
        let mut j = DMatrix::zeros(m * m, d);
        for (k, ak) in da.iter().enumerate() {
            let axi = &a * &xi;
            let dk = ak * &xi * a.transpose() + &axi * ak.transpose();
            j.column_mut(k).copy_from(&matcalc::vec(&dk));
        }
        j.columns_mut(q, nx).copy_from(&(linalg::kron(&a, &a) * &dup_p));
        j.column_mut(d - 1).copy_from(&matcalc::vec(&DMatrix::identity(m, m)));
        j
    })))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub residual: Vec<f64>,
    pub residual_inf: f64,
    pub tol: f64,
    pub satisfied: bool,
}

/// Evaluates the adaptivity residual at `θ₀`.
pub fn condition_check(
    param: &Parameterization,
    theta0: &DVector<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<ConditionReport> {
    let fim = fim_theta(param, theta0, gen, m)?;
    let q = param.q;
    let r = param.r();
    let jvs = param.jacobian_vec_sigma(theta0);
    let sigma_inv = linalg::spd_inverse(&param.sigma(theta0))?;
    let vsi = matcalc::vec(&sigma_inv);
    let j_gamma = jvs.columns(0, q).into_owned();
    let direct = j_gamma.transpose() * &vsi;
    let residual = if r == 0 {
        direct.clone()
    } else {
        let i_gx = fim.view((0, q), (q, r)).into_owned();
        let i_x = fim.view((q, q), (r, r)).into_owned();
        let j_xi = jvs.columns(q, r).into_owned();
        let rhs = DMatrix::from_column_slice(r, 1, (j_xi.transpose() * &vsi).as_slice());
        let corr = linalg::spd_solve(&i_x, &rhs)
            .map_err(|_| CesError::Identifiability("nuisance block of the FIM is singular".into()))?;
        &direct - (i_gx * corr).column(0)
    };
    let tol = 1e-8 * direct.amax().max(1.0);
    let residual_inf = residual.amax();
    Ok(ConditionReport {
        residual: residual.iter().cloned().collect(),
        residual_inf,
        tol,
        satisfied: residual_inf < tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptivityReport {
    pub parametric_trace: f64,
    pub semiparametric_trace: f64,
    pub gap_frobenius: f64,
    pub relative_gap: f64,
    pub adaptive: bool,
    pub condition: ConditionReport,
}

/// Relative gap below which the parametric and semiparametric efficient FIMs are called equal.
pub const FIM_GAP_TOL: f64 = 1e-8;

/// Compares the efficient FIMs of `γ` with the generator known and unknown.
pub fn verify_adaptivity_by_fim(
    param: &Parameterization,
    theta0: &DVector<f64>,
    gen: &DensityGenerator,
    m: usize,
) -> Result<AdaptivityReport> {
    let condition = condition_check(param, theta0, gen, m)?;
    let par = efficient_fim_interest(&fim_theta(param, theta0, gen, m)?, param.q)?;
    let semi = efficient_fim_interest(&sfim_theta(param, theta0, gen, m)?, param.q)?;
    let gap = (&par - &semi).norm();
    let relative_gap = gap / par.norm().max(1e-300);
    Ok(AdaptivityReport {
        parametric_trace: par.trace(),
        semiparametric_trace: semi.trace(),
        gap_frobenius: gap,
        relative_gap,
        adaptive: relative_gap < FIM_GAP_TOL,
        condition,
    })
}
