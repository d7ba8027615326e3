//! Shape-matrix estimators: constrained SCM, constrained Tyler, and the
//! one-step rank-based R-estimator, plus the MSE index.
//!
//! All estimators assume zero-mean data given as an `n x m` matrix (one
//! observation per row).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};

use crate::error::{CesError, Result};
use crate::linalg;
use crate::matcalc::{self, Structural};
use crate::scale_shape::{self, ScaleFunctional};

/// Score function `K : (0,1) → [0, ∞)` of the R-estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFunction {
    /// `K(u) = Ψ⁻¹_m(u)`, the chi-square quantile with `m` degrees of freedom.
    VanDerWaerden,
    /// `K(u) = m(m+ν)F⁻¹(u) / (ν + m F⁻¹(u))`, `F` the Fisher `(m, ν)` cdf.
    TScore(f64),
}

impl ScoreFunction {
    pub fn t_score(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(CesError::Domain(format!("t-score needs a finite nu > 0, got {nu}")));
        }
        Ok(ScoreFunction::TScore(nu))
    }

    /// `K(u)` for dimension `m`.
    pub fn eval(&self, u: f64, m: usize) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(CesError::Domain(format!("score argument {u} is outside (0, 1)")));
        }
        if m == 0 {
            return Err(CesError::InvalidDimension("m must be positive".into()));
        }
        let mf = m as f64;
        match *self {
            ScoreFunction::VanDerWaerden => chi2_quantile(mf, u),
            ScoreFunction::TScore(nu) => Ok(t_score_value(mf, nu, u)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScoreFunction::VanDerWaerden => "vdw".to_string(),
            ScoreFunction::TScore(nu) => format!("t{nu}"),
        }
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ScoreFunction {
    type Err = CesError;

    /// Accepts `vdw`, `van-der-waerden`, `t<nu>`, `t:<nu>` or `t(<nu>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "vdw" || s == "van-der-waerden" {
            return Ok(ScoreFunction::VanDerWaerden);
        }
        if let Some(rest) = s.strip_prefix('t') {
            let rest = rest.trim_start_matches([':', '(']).trim_end_matches(')');
            if let Ok(nu) = rest.parse::<f64>() {
                return ScoreFunction::t_score(nu);
            }
        }
        Err(CesError::Config(format!("unknown score function '{s}' (expected vdw or t<nu>)")))
    }
}

/// Inverts a continuous cdf on `(0, upper)` by Newton steps safeguarded with
/// bisection, starting from `guess` (typically the statrs quantile).
fn invert_cdf(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, u: f64, guess: f64, upper: f64) -> f64 {
    let start = if guess.is_finite() && guess > 0.0 && guess < upper { guess } else { upper.min(1.0) * 0.5 };
    let (mut lo, mut hi) = (start, start);
    while cdf(lo) > u && lo > 1e-300 {
        lo *= 0.5;
    }
    while cdf(hi) < u {
        hi = if upper.is_finite() { 0.5 * (hi + upper) } else { 2.0 * hi };
    }
    let mut x = start;
    for _ in 0..200 {
        let f = cdf(x) - u;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - f / pdf(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            x = next;
            break;
        }
        x = next;
    }
    x
}

fn chi2_quantile(df: f64, u: f64) -> Result<f64> {
    let d = ChiSquared::new(df).map_err(|e| CesError::Domain(e.to_string()))?;
    Ok(invert_cdf(|x| d.cdf(x), |x| d.pdf(x), u, d.inverse_cdf(u), f64::INFINITY))
}

/// Quantile of `Beta(a, b)`.
fn beta_quantile(a: f64, b: f64, u: f64) -> f64 {
    let lb = ln_beta(a, b);
    let pdf = |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - lb).exp();
    invert_cdf(|x| beta_reg(a, b, x), pdf, u, inv_beta_reg(a, b, u), 1.0)
}

/// `m(m+ν)F⁻¹/(ν + mF⁻¹) = (m+ν) B⁻¹(u)` with `B = mF/(ν+mF) ~ Beta(m/2, ν/2)`.
fn t_score_value(m: f64, nu: f64, u: f64) -> f64 {
    (m + nu) * beta_quantile(m / 2.0, nu / 2.0, u)
}

/// `K(i/(n+1))` for `i = 1..=n`, computed once per `(K, m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub score: ScoreFunction,
    pub m: usize,
    values: Vec<f64>,
}

impl ScoreTable {
    pub fn new(score: ScoreFunction, m: usize, n: usize) -> Result<Self> {
        let values = (1..=n)
            .map(|i| score.eval(i as f64 / (n as f64 + 1.0), m))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreTable { score, m, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `K(r/(n+1))` for a 1-based rank `r`.
    pub fn at_rank(&self, r: usize) -> f64 {
        self.values[r - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Scm,
    Tyler,
    REstimator { score: ScoreFunction, iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Tyler: last relative change. R-estimator: relative size of the last step.
    pub final_residual: f64,
    /// Cross-information estimate of the last R-step.
    pub alpha_hat: Option<f64>,
    /// `|S(V̂) - 1|`.
    pub manifold_deviation: f64,
    /// Set when an R-step was rejected and the preliminary estimate returned.
    pub step_rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEstimate {
    pub v_hat: DMatrix<f64>,
    pub scale_kind: ScaleFunctional,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

fn check_data(data: &DMatrix<f64>, min_n: usize) -> Result<(usize, usize)> {
    let (n, m) = data.shape();
    if m == 0 {
        return Err(CesError::InvalidDimension("data has no columns".into()));
    }
    if n <= min_n {
        return Err(CesError::InvalidDimension(format!("need more than {min_n} observations, got {n}")));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(CesError::Domain("data contains non-finite values".into()));
    }
    Ok((n, m))
}

/// Constrained sample covariance `Σ̂ / S(Σ̂)` with `Σ̂ = n⁻¹ Σ x xᵀ`.
pub fn scm_shape(data: &DMatrix<f64>, kind: ScaleFunctional) -> Result<ShapeEstimate> {
    let (n, _) = check_data(data, data.ncols())?;
    let cov = data.transpose() * data / n as f64;
    if cov.clone().cholesky().is_none() {
        return Err(CesError::Singular("sample covariance".into()));
    }
    let v = scale_shape::renormalize(kind, &linalg::symmetrize(&cov))?;
    Ok(ShapeEstimate {
        diagnostics: Diagnostics { manifold_deviation: (kind.value(&v)? - 1.0).abs(), ..Default::default() },
        v_hat: v,
        scale_kind: kind,
        method: Method::Scm,
    })
}

pub const TYLER_TOL: f64 = 1e-10;
pub const TYLER_MAX_ITER: usize = 200;

/// One Tyler sweep `(m/n) Σ u uᵀ / (uᵀ V⁻¹ u)` on unit-norm rows.
fn tyler_map(dirs: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = dirs.shape();
    let chol = v
        .clone()
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite("Tyler iterate".into()))?;
    let mut acc = DMatrix::zeros(m, m);
    for row in dirs.row_iter() {
        let u = row.transpose();
        let q = u.dot(&chol.solve(&u));
        acc.ger(1.0 / q, &u, &u, 1.0);
    }
    Ok(linalg::symmetrize(&(acc * (m as f64 / n as f64))))
}

fn unit_rows(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut dirs = data.clone();
    for (i, mut row) in dirs.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm > 0.0) {
            return Err(CesError::Domain(format!("observation {i} is zero")));
        }
        row /= norm;
    }
    Ok(dirs)
}

/// Constrained Tyler fixed point, renormalized to `S(V) = 1` after every sweep.
///
/// Rows are reduced to unit directions first, so the result depends on the
/// data only through `x / ‖x‖`.
pub fn tyler_shape(data: &DMatrix<f64>, kind: ScaleFunctional, tol: f64, max_iter: usize) -> Result<ShapeEstimate> {
    let (_, m) = check_data(data, data.ncols())?;
    let dirs = unit_rows(data)?;
    let mut v = scale_shape::renormalize(kind, &DMatrix::identity(m, m))?;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = scale_shape::renormalize(kind, &tyler_map(&dirs, &v)?)?;
        residual = (&next - &v).norm() / v.norm();
        v = next;
        if residual < tol {
            return Ok(ShapeEstimate {
                diagnostics: Diagnostics {
                    iterations: it,
                    final_residual: residual,
                    manifold_deviation: (kind.value(&v)? - 1.0).abs(),
                    ..Default::default()
                },
                v_hat: v,
                scale_kind: kind,
                method: Method::Tyler,
            });
        }
    }
    Err(CesError::NonConvergence { iterations: max_iter, residual })
}

/// Relative plug-back residual `‖T(V) / S(T(V)) - V‖_F / ‖V‖_F` of the Tyler map at `V`.
pub fn tyler_residual(data: &DMatrix<f64>, kind: ScaleFunctional, v: &DMatrix<f64>) -> Result<f64> {
    let dirs = unit_rows(data)?;
    let next = scale_shape::renormalize(kind, &tyler_map(&dirs, v)?)?;
    Ok((&next - v).norm() / v.norm())
}

/// 1-based ranks in ascending order, ties broken by index.
pub fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut r = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

/// Default number of R-steps: 3 for `DetRoot`, whose tangent basis moves with `V`, else 1.
pub fn default_iterations(kind: ScaleFunctional) -> usize {
    match kind {
        ScaleFunctional::DetRoot => 3,
        _ => 1,
    }
}

/// Rank statistic and its linear map at one shape value.
struct RankStatistic {
    delta: DVector<f64>,
    upsilon: DMatrix<f64>,
}

/// `Υ_V = D_mᵀ (V^{-1/2} ⊗ V^{-1/2}) Π⊥_{vec I}`, of size `m(m+1)/2 x m²`.
pub fn upsilon(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    upsilon_with(&linalg::sym_inv_sqrt(v)?, &Structural::new(v.nrows())?)
}

fn upsilon_with(w: &DMatrix<f64>, st: &Structural) -> Result<DMatrix<f64>> {
    let m = w.nrows();
    let mm = m * m;
    let ivec = matcalc::vec(&DMatrix::identity(m, m));
    let proj = DMatrix::identity(mm, mm) - &ivec * ivec.transpose() / m as f64;
    Ok(st.dup.transpose() * linalg::kron(w, w) * proj)
}

/// `Δ_V = (2√n)⁻¹ Υ_V Σ_l K(r_l/(n+1)) vec(û_l û_lᵀ)`.
pub fn rank_delta(data: &DMatrix<f64>, v: &DMatrix<f64>, table: &ScoreTable) -> Result<DVector<f64>> {
    Ok(rank_statistic(data, v, table, &Structural::new(v.nrows())?)?.delta)
}

fn rank_statistic(data: &DMatrix<f64>, v: &DMatrix<f64>, table: &ScoreTable, st: &Structural) -> Result<RankStatistic> {
    let (n, m) = data.shape();
    if v.shape() != (m, m) || table.n() != n || table.m != m {
        return Err(CesError::InvalidDimension("data, shape and score table sizes differ".into()));
    }
    let w = linalg::sym_inv_sqrt(v)?;
    let z = data * &w; // rows are (V^{-1/2} x_l)ᵀ
    let q: Vec<f64> = z.row_iter().map(|r| r.norm_squared()).collect();
    let r = ranks(&q);
    let mut b = DMatrix::zeros(m, m);
    for (l, row) in z.row_iter().enumerate() {
        if !(q[l] > 0.0) {
            return Err(CesError::Domain(format!("observation {l} is zero")));
        }
        let u = row.transpose() / q[l].sqrt();
        b.ger(table.at_rank(r[l]), &u, &u, 1.0);
    }
    // Υ vec(B) = D_mᵀ vec(W (B - tr(B)/m I) W) without forming the Kronecker product
    let centred = &b - DMatrix::identity(m, m) * (b.trace() / m as f64);
    let delta = st.dup.transpose() * matcalc::vec(&(&w * centred * &w)) / (2.0 * (n as f64).sqrt());
    Ok(RankStatistic { delta, upsilon: upsilon_with(&w, st)? })
}

/// `Ξ_V = 2 U (Uᵀ Υ Υᵀ U)⁻¹ Uᵀ`, with `U` the tangent basis at the renormalized `V`.
fn xi_matrix(kind: ScaleFunctional, v: &DMatrix<f64>, upsilon: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let u = scale_shape::u_basis(kind, &scale_shape::renormalize(kind, v)?)?;
    let g = u.transpose() * upsilon * upsilon.transpose() * &u;
    let chol = linalg::symmetrize(&g)
        .cholesky()
        .ok_or_else(|| CesError::Singular("U' Y Y' U".into()))?;
    Ok(&u * chol.inverse() * u.transpose() * 2.0)
}

/// R-estimator with `K` given by name; builds the score table internally.
pub fn r_estimator(
    data: &DMatrix<f64>,
    kind: ScaleFunctional,
    score: ScoreFunction,
    preliminary: &ShapeEstimate,
    iterations: usize,
) -> Result<ShapeEstimate> {
    let table = ScoreTable::new(score, data.ncols(), data.nrows())?;
    r_estimator_with_table(data, kind, &table, preliminary, iterations, false)
}

/// R-estimator `vecs(V_R) = vecs(V⋆) + (α̂√n)⁻¹ Ξ_{V⋆} Δ_{V⋆}`, iterated `iterations` times.
///
/// `α̂` is the local slope of `Δ` along the update: with `Δ₀ = Δ_{V⋆}` and
/// `V₁ = S-renormalized(V⋆ + n^{-1/2} Ξ Δ₀)`, `α̂ = ⟨Δ₀ - Δ_{V₁}, Δ₀⟩ / ‖Δ₀‖²`.
/// A non-positive or non-finite `α̂`, or a singular `UᵀΥΥᵀU`, rejects the
/// step: the preliminary estimate is returned with `step_rejected` set.
/// The output is not renormalized unless `renormalize` is true.
pub fn r_estimator_with_table(
    data: &DMatrix<f64>,
    kind: ScaleFunctional,
    table: &ScoreTable,
    preliminary: &ShapeEstimate,
    iterations: usize,
    renormalize: bool,
) -> Result<ShapeEstimate> {
    let (n, m) = check_data(data, matcalc::half_len(data.ncols()))?;
    if preliminary.scale_kind != kind {
        return Err(CesError::ScaleMismatch(format!(
            "preliminary estimate uses {}, requested {}",
            preliminary.scale_kind, kind
        )));
    }
    if table.m != m || table.n() != n {
        return Err(CesError::InvalidDimension(format!(
            "score table is for m = {}, n = {}; data is {n} x {m}",
            table.m,
            table.n()
        )));
    }
    let method = Method::REstimator { score: table.score, iterations };
    if m == 1 {
        // a scalar shape is fixed by the constraint and the centred statistic vanishes
        return Ok(ShapeEstimate {
            v_hat: preliminary.v_hat.clone(),
            scale_kind: kind,
            method,
            diagnostics: Diagnostics {
                manifold_deviation: (kind.value(&preliminary.v_hat)? - 1.0).abs(),
                ..Default::default()
            },
        });
    }
    let st = Structural::new(m)?;
    let sqrt_n = (n as f64).sqrt();
    let mut v = preliminary.v_hat.clone();
    let mut diag = Diagnostics::default();
    let reject = |diag: Diagnostics| -> Result<ShapeEstimate> {
        Ok(ShapeEstimate {
            v_hat: preliminary.v_hat.clone(),
            scale_kind: kind,
            method,
            diagnostics: Diagnostics {
                step_rejected: true,
                manifold_deviation: (kind.value(&preliminary.v_hat)? - 1.0).abs(),
                ..diag
            },
        })
    };
    for k in 0..iterations {
        let s0 = rank_statistic(data, &v, table, &st)?;
        let norm0 = s0.delta.norm_squared();
        if norm0 == 0.0 {
            break;
        }
        let xi = match xi_matrix(kind, &v, &s0.upsilon) {
            Ok(x) => x,
            Err(_) => return reject(diag),
        };
        let dir = &xi * &s0.delta;
        let vecs_v = matcalc::vecs(&v);
        let v1 = matcalc::unvecs(&(&vecs_v + &dir / sqrt_n), m)?;
        let v1 = match scale_shape::renormalize(kind, &v1) {
            Ok(x) if x.clone().cholesky().is_some() => x,
            _ => return reject(diag),
        };
        let s1 = rank_statistic(data, &v1, table, &st)?;
        let alpha = (&s0.delta - &s1.delta).dot(&s0.delta) / norm0;
        diag.alpha_hat = Some(alpha);
        if !(alpha > 0.0) || !alpha.is_finite() {
            return reject(diag);
        }
        let step = &dir / (alpha * sqrt_n);
        let next = matcalc::unvecs(&(&vecs_v + &step), m)?;
        if next.clone().cholesky().is_none() {
            return reject(diag);
        }
        diag.iterations = k + 1;
        diag.final_residual = step.norm() / vecs_v.norm();
        v = next;
    }
    if renormalize {
        v = scale_shape::renormalize(kind, &v)?;
    }
    diag.manifold_deviation = (kind.value(&v)? - 1.0).abs();
    Ok(ShapeEstimate { v_hat: v, scale_kind: kind, method, diagnostics: diag })
}

/// `‖ovecs(V̂ - V₀)‖²`.
pub fn squared_error(v_hat: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    matcalc::ovecs(&(v_hat - truth)).norm_squared()
}

/// Empirical MSE index `mean ‖ovecs(V̂ - V₀)‖²` over estimates using scale `kind`.
pub fn mse_index(estimates: &[ShapeEstimate], truth: &DMatrix<f64>, kind: ScaleFunctional) -> Result<f64> {
    if estimates.is_empty() {
        return Err(CesError::InvalidDimension("no estimates".into()));
    }
    let mut acc = 0.0;
    for e in estimates {
        if e.scale_kind != kind {
            return Err(CesError::ScaleMismatch(format!("estimate uses {}, truth uses {}", e.scale_kind, kind)));
        }
        if e.v_hat.shape() != truth.shape() {
            return Err(CesError::InvalidDimension("estimate and truth sizes differ".into()));
        }
        acc += squared_error(&e.v_hat, truth);
    }
    Ok(acc / estimates.len() as f64)
}

/// Sample standard error of the mean of `values`.
pub fn std_err(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}
