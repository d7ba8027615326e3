//! Complex elliptically symmetric (CES) data through the real embedding
//! `x̄ = (Re x, Im x)`, and closed-form efficient FIMs for complex models.
//!
//! A complex `m`-vector is CES if `x̄ ∈ R^{2m}` is RES. With the augmented
//! vector `x̃ = (x, x*) = √2 M x̄` and `Σ̃ = [[Σ, Ω], [Ω*, Σ*]] = 2 M Σ̄ Mᴴ`,
//! the complex generator is `ḡ_c(t) = 2^m ḡ_r(2t)` and `Q_c = Q_r / 2`.
//! A [`DensityGenerator`] used on the complex side is interpreted as the
//! real generator of `x̄`, i.e. evaluated at dimension `2m`.
//!
//! The closed forms below use complex arithmetic directly. The
//! `embedded_*` constructors build the same models as real parameterizations
//! in dimension `2m`, so the generic real FIM pipeline can serve as an
//! independent check.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use crate::adaptivity::{LowRankModel, MatFn, MatListFn, Parameterization};
use crate::elliptical::{Coefficients, DensityGenerator};
use crate::error::{CesError, Result};
use crate::linalg;
use crate::matcalc;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type CVecFn = Arc<dyn Fn(&DVector<f64>) -> CVector + Send + Sync>;
pub type CMatFn = Arc<dyn Fn(&DVector<f64>) -> CMatrix + Send + Sync>;
pub type CMatListFn = Arc<dyn Fn(&DVector<f64>) -> Vec<CMatrix> + Send + Sync>;

const HERMITIAN_TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| c(x, 0.0))
}

/// The unitary `M = 2^{-1/2} [[I, iI], [I, -iI]]` of size `2m`.
pub fn unitary_m(m: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = CMatrix::zeros(2 * m, 2 * m);
    for k in 0..m {
        out[(k, k)] = c(s, 0.0);
        out[(k, m + k)] = c(0.0, s);
        out[(m + k, k)] = c(s, 0.0);
        out[(m + k, m + k)] = c(0.0, -s);
    }
    out
}

/// `x̄ = (Re x, Im x)`.
pub fn embed_vector(x: &CVector) -> DVector<f64> {
    let m = x.len();
    DVector::from_fn(2 * m, |i, _| if i < m { x[i].re } else { x[i - m].im })
}

/// Inverse of [`embed_vector`].
pub fn unembed_vector(xb: &DVector<f64>) -> Result<CVector> {
    if !xb.len().is_multiple_of(2) {
        return Err(CesError::InvalidDimension(format!("embedded vector has odd length {}", xb.len())));
    }
    let m = xb.len() / 2;
    Ok(CVector::from_fn(m, |i, _| c(xb[i], xb[m + i])))
}

/// `x̃ = (x, x*)`.
pub fn augment_vector(x: &CVector) -> CVector {
    let m = x.len();
    CVector::from_fn(2 * m, |i, _| if i < m { x[i] } else { x[i - m].conj() })
}

/// `Σ̃ = [[Σ, Ω], [Ω*, Σ*]]`.
pub fn augmented_scatter(sigma: &CMatrix, omega: &CMatrix) -> CMatrix {
    let m = sigma.nrows();
    let mut out = CMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(sigma);
    out.view_mut((0, m), (m, m)).copy_from(omega);
    out.view_mut((m, 0), (m, m)).copy_from(&omega.conjugate());
    out.view_mut((m, m), (m, m)).copy_from(&sigma.conjugate());
    out
}

fn relative_anti_hermitian(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm() / a.norm().max(1e-300)
}

fn check_hermitian(a: &CMatrix, what: &str) -> Result<()> {
    let r = relative_anti_hermitian(a);
    if r > HERMITIAN_TOL {
        return Err(CesError::NotPositiveDefinite(format!("{what} is not Hermitian (relative error {r:.3e})")));
    }
    Ok(())
}

/// `Σ̄ = ½ [[Re(Σ+Ω), Im(Ω-Σ)], [Im(Σ+Ω), Re(Σ-Ω)]]`, the scatter of `x̄`.
///
/// Fails unless `Σ` is Hermitian, `Ω` is symmetric, and `Σ̄` is positive definite.
pub fn real_scatter(sigma: &CMatrix, omega: &CMatrix) -> Result<DMatrix<f64>> {
    let sb = real_scatter_unchecked(sigma, omega)?;
    check_hermitian(sigma, "sigma")?;
    let asym = (omega - omega.transpose()).norm() / omega.norm().max(1e-300);
    if omega.norm() > 0.0 && asym > HERMITIAN_TOL {
        return Err(CesError::NotSymmetric(asym));
    }
    if sb.clone().cholesky().is_none() {
        return Err(CesError::NotPositiveDefinite("augmented scatter matrix".into()));
    }
    Ok(sb)
}

/// The linear map behind [`real_scatter`], without validity checks.
pub fn real_scatter_unchecked(sigma: &CMatrix, omega: &CMatrix) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    if sigma.ncols() != m || omega.shape() != (m, m) {
        return Err(CesError::InvalidDimension("sigma and omega must be m x m".into()));
    }
    let plus = sigma + omega;
    let minus = sigma - omega;
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(&plus.map(|z| 0.5 * z.re));
    out.view_mut((0, m), (m, m)).copy_from(&minus.map(|z| -0.5 * z.im));
    out.view_mut((m, 0), (m, m)).copy_from(&plus.map(|z| 0.5 * z.im));
    out.view_mut((m, m), (m, m)).copy_from(&minus.map(|z| 0.5 * z.re));
    Ok(out)
}

/// Recovers `(Σ, Ω)` from `Σ̄` through `Σ̃ = 2 M Σ̄ Mᴴ`.
pub fn complex_scatter(sigma_bar: &DMatrix<f64>) -> Result<(CMatrix, CMatrix)> {
    let n = sigma_bar.nrows();
    if !n.is_multiple_of(2) || sigma_bar.ncols() != n {
        return Err(CesError::InvalidDimension("embedded scatter must be 2m x 2m".into()));
    }
    let m = n / 2;
    let mm = unitary_m(m);
    let st = &mm * to_complex(sigma_bar) * mm.adjoint() * c(2.0, 0.0);
    Ok((st.view((0, 0), (m, m)).into_owned(), st.view((0, m), (m, m)).into_owned()))
}

/// A complex observation together with its real embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEmbedding {
    pub x_c: CVector,
    pub x_bar: DVector<f64>,
    pub sigma_c: CMatrix,
    pub omega_c: CMatrix,
    pub sigma_bar: DMatrix<f64>,
}

impl ComplexEmbedding {
    pub fn new(x: &CVector, sigma: &CMatrix, omega: &CMatrix) -> Result<Self> {
        if x.len() != sigma.nrows() {
            return Err(CesError::InvalidDimension("x and sigma sizes differ".into()));
        }
        Ok(ComplexEmbedding {
            x_c: x.clone(),
            x_bar: embed_vector(x),
            sigma_c: sigma.clone(),
            omega_c: omega.clone(),
            sigma_bar: real_scatter(sigma, omega)?,
        })
    }

    pub fn is_circular(&self) -> bool {
        self.omega_c.iter().all(|z| z.norm() == 0.0)
    }
}

/// `(x̄, Σ̄, ḡ_r)`. The returned generator is the same family, to be used at dimension `2m`.
pub fn embed(
    x: &CVector,
    sigma: &CMatrix,
    omega: &CMatrix,
    gen_c: &DensityGenerator,
) -> Result<(DVector<f64>, DMatrix<f64>, DensityGenerator)> {
    let e = ComplexEmbedding::new(x, sigma, omega)?;
    Ok((e.x_bar, e.sigma_bar, *gen_c))
}

/// Complex-convention `α_c = E{Q_c² φ̄_c²}/(m(m+1))`, `β_c = E{Q_c φ̄_c²}/m`
/// and `σ²_{Q_c} = E{Q_c²} - m²`.
///
/// With `φ̄_c(t) = φ̄_r(2t)` and `Q_c = Q_r/2`, `α_c` and `β_c` equal the
/// real coefficients at dimension `2m`, and `σ²_{Q_c}` is a quarter of the real one.
pub fn complex_coefficients(gen: &DensityGenerator, m: usize) -> Result<Coefficients> {
    let r = gen.coefficients(2 * m)?;
    Ok(Coefficients { alpha: r.alpha, beta: r.beta, sigma_q2: r.sigma_q2.map(|s| s / 4.0) })
}

/// `Q_c = ½ (x̃ - μ̃)ᴴ Σ̃⁻¹ (x̃ - μ̃)`.
pub fn complex_modular_variate(x: &CVector, mu: &CVector, sigma: &CMatrix, omega: &CMatrix) -> Result<f64> {
    let d = augment_vector(&(x - mu));
    let st = augmented_scatter(sigma, omega);
    let chol = st
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite("augmented scatter matrix".into()))?;
    let w = chol.solve(&d);
    Ok(0.5 * d.dotc(&w).re)
}

/// `n` draws (rows) of a CES vector with scatter `Σ`, pseudo-scatter `Ω`, sampled through the real embedding.
pub fn sample(
    n: usize,
    mu: &CVector,
    sigma: &CMatrix,
    omega: &CMatrix,
    gen: &DensityGenerator,
    seed: u64,
) -> Result<CMatrix> {
    let m = mu.len();
    let sb = real_scatter(sigma, omega)?;
    let xb = gen.sample(n, &embed_vector(mu), &sb, seed)?;
    Ok(CMatrix::from_fn(n, m, |i, j| c(xb[(i, j)], xb[(i, m + j)])))
}

fn complex_spd_inverse(a: &CMatrix, what: &str) -> Result<CMatrix> {
    check_hermitian(a, what)?;
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite(what.into()))?;
    Ok(chol.inverse())
}

fn real_part_checked(a: &CMatrix) -> DMatrix<f64> {
    let out = a.map(|z| z.re);
    linalg::symmetrize(&out)
}

/// Location FIM for a circular model, `2β Re{J[μ]ᴴ Σ⁻¹ J[μ]}`, `J[μ]` of size `m x q`.
pub fn cces_fim_location(jac_mu: &CMatrix, sigma: &CMatrix, gen: &DensityGenerator) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    if jac_mu.nrows() != m {
        return Err(CesError::InvalidDimension(format!("J[mu] must have {m} rows")));
    }
    let beta = complex_coefficients(gen, m)?.beta;
    let sinv = complex_spd_inverse(sigma, "sigma")?;
    let f = jac_mu.adjoint() * sinv * jac_mu;
    Ok(real_part_checked(&f) * (2.0 * beta))
}

/// Location FIM for a non-circular model, `β J[μ̃]ᴴ Σ̃⁻¹ J[μ̃]` with `J[μ̃] = (J, J*)`.
pub fn nc_fim_location(jac_mu: &CMatrix, sigma: &CMatrix, omega: &CMatrix, gen: &DensityGenerator) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    if jac_mu.nrows() != m {
        return Err(CesError::InvalidDimension(format!("J[mu] must have {m} rows")));
    }
    real_scatter(sigma, omega)?;
    let beta = complex_coefficients(gen, m)?.beta;
    let q = jac_mu.ncols();
    let mut jt = CMatrix::zeros(2 * m, q);
    jt.rows_mut(0, m).copy_from(jac_mu);
    jt.rows_mut(m, m).copy_from(&jac_mu.conjugate());
    let st_inv = complex_spd_inverse(&augmented_scatter(sigma, omega), "augmented scatter")?;
    let f = jt.adjoint() * st_inv * jt;
    Ok(real_part_checked(&f) * beta)
}

/// `Σ = A(γ) Ξ A(γ)ᴴ + λ I` with complex steering `A` and Hermitian `Ξ`.
#[derive(Clone)]
pub struct ComplexLowRank {
    pub m: usize,
    pub p: usize,
    a_fn: CMatFn,
    a_jac: CMatListFn,
    pub gamma0: DVector<f64>,
    pub signal_cov: CMatrix,
    pub noise_level: f64,
}

impl std::fmt::Debug for ComplexLowRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComplexLowRank")
            .field("m", &self.m)
            .field("p", &self.p)
            .field("gamma0", &self.gamma0)
            .field("noise_level", &self.noise_level)
            .finish()
    }
}

/// ULA steering vector `a_i(θ) = exp(iπ i sin θ)` for half-wavelength spacing.
pub fn ula_steering(m: usize, theta: f64) -> CVector {
    CVector::from_fn(m, |i, _| C64::from_polar(1.0, std::f64::consts::PI * i as f64 * theta.sin()))
}

/// `d a(θ) / dθ` of [`ula_steering`].
pub fn ula_steering_derivative(m: usize, theta: f64) -> CVector {
    let a = ula_steering(m, theta);
    let k = std::f64::consts::PI * theta.cos();
    CVector::from_fn(m, |i, _| a[i] * c(0.0, k * i as f64))
}

fn ula_fns(m: usize, p: usize) -> (CMatFn, CMatListFn) {
    (
        Arc::new(move |g: &DVector<f64>| {
            let mut a = CMatrix::zeros(m, p);
            for k in 0..p {
                a.set_column(k, &ula_steering(m, g[k]));
            }
            a
        }),
        Arc::new(move |g: &DVector<f64>| {
            (0..p)
                .map(|k| {
                    let mut d = CMatrix::zeros(m, p);
                    d.set_column(k, &ula_steering_derivative(m, g[k]));
                    d
                })
                .collect()
        }),
    )
}

impl ComplexLowRank {
    pub fn new(
        m: usize,
        p: usize,
        a_fn: CMatFn,
        a_jac: CMatListFn,
        gamma0: DVector<f64>,
        signal_cov: CMatrix,
        noise_level: f64,
    ) -> Self {
        ComplexLowRank { m, p, a_fn, a_jac, gamma0, signal_cov, noise_level }
    }

    /// Uniform linear array with one direction of arrival per source.
    pub fn ula(m: usize, doas: DVector<f64>, signal_cov: CMatrix, noise_level: f64) -> Self {
        let p = doas.len();
        let (a_fn, a_jac) = ula_fns(m, p);
        ComplexLowRank::new(m, p, a_fn, a_jac, doas, signal_cov, noise_level)
    }

    pub fn q(&self) -> usize {
        self.gamma0.len()
    }

    pub fn steering(&self, gamma: &DVector<f64>) -> CMatrix {
        (self.a_fn)(gamma)
    }

    pub fn steering_derivatives(&self, gamma: &DVector<f64>) -> Vec<CMatrix> {
        (self.a_jac)(gamma)
    }

    pub fn sigma(&self, gamma: &DVector<f64>) -> CMatrix {
        let a = self.steering(gamma);
        &a * &self.signal_cov * a.adjoint() + CMatrix::identity(self.m, self.m) * c(self.noise_level, 0.0)
    }

    fn validate(&self) -> Result<CMatrix> {
        let a = self.steering(&self.gamma0);
        if a.shape() != (self.m, self.p) {
            return Err(CesError::InvalidDimension(format!("steering matrix must be {}x{}", self.m, self.p)));
        }
        let sv = a.clone().svd(false, false).singular_values;
        if sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count() < self.p {
            return Err(CesError::Identifiability("steering matrix is rank deficient".into()));
        }
        check_hermitian(&self.signal_cov, "signal covariance")?;
        if self.signal_cov.clone().cholesky().is_none() {
            return Err(CesError::NotPositiveDefinite("signal covariance".into()));
        }
        if !(self.noise_level > 0.0) {
            return Err(CesError::Domain("noise level must be positive".into()));
        }
        Ok(a)
    }
}

/// `I - A (AᴴA)⁻¹ Aᴴ`.
fn complement_projector(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let gram = a.adjoint() * a;
    let inv = complex_spd_inverse(&gram, "steering Gram matrix")?;
    Ok(CMatrix::identity(n, n) - a * inv * a.adjoint())
}

/// `J[vec A]`, one column per interest parameter.
fn vec_jacobian(derivs: &[CMatrix]) -> CMatrix {
    let rows = derivs.first().map(|d| d.len()).unwrap_or(0);
    let mut j = CMatrix::zeros(rows, derivs.len());
    for (k, d) in derivs.iter().enumerate() {
        j.set_column(k, &CVector::from_column_slice(d.as_slice()));
    }
    j
}

/// Efficient FIM of `γ` in the circular low-rank model,
/// `(2α/λ) Re{J[vec A]ᴴ (H₀ᵀ ⊗ Π⊥_A) J[vec A]}` with `H₀ = Ξ Aᴴ Σ⁻¹ A Ξ`.
pub fn cces_lowrank_fim(model: &ComplexLowRank, gen: &DensityGenerator) -> Result<DMatrix<f64>> {
    let a = model.validate()?;
    let alpha = complex_coefficients(gen, model.m)?.alpha;
    let sinv = complex_spd_inverse(&model.sigma(&model.gamma0), "sigma")?;
    let h0 = &model.signal_cov * a.adjoint() * sinv * &a * &model.signal_cov;
    let proj = complement_projector(&a)?;
    let j = vec_jacobian(&model.steering_derivatives(&model.gamma0));
    let mid = h0.transpose().kronecker(&proj);
    let f = j.adjoint() * mid * j;
    Ok(real_part_checked(&f) * (2.0 * alpha / model.noise_level))
}

/// One-parameter-per-source form `(2α/λ) Re{(D₀ᴴ Π⊥ D₀) ⊙ H₀ᵀ}`, where column `k`
/// of `D₀` is the derivative of steering column `k` with respect to `γ_k`.
pub fn doa_fim(model: &ComplexLowRank, gen: &DensityGenerator) -> Result<DMatrix<f64>> {
    let a = model.validate()?;
    if model.q() != model.p {
        return Err(CesError::InvalidDimension("the DOA form needs one parameter per source".into()));
    }
    let derivs = model.steering_derivatives(&model.gamma0);
    let mut d0 = CMatrix::zeros(model.m, model.p);
    for (k, dk) in derivs.iter().enumerate() {
        let others = dk.norm_squared() - dk.column(k).norm_squared();
        if others > 1e-24 * dk.norm_squared().max(1.0) {
            return Err(CesError::InvalidDimension(format!(
                "parameter {k} moves steering columns other than its own"
            )));
        }
        d0.set_column(k, &dk.column(k));
    }
    let alpha = complex_coefficients(gen, model.m)?.alpha;
    let sinv = complex_spd_inverse(&model.sigma(&model.gamma0), "sigma")?;
    let h0 = &model.signal_cov * a.adjoint() * sinv * &a * &model.signal_cov;
    let proj = complement_projector(&a)?;
    let f = (d0.adjoint() * proj * &d0).component_mul(&h0.transpose());
    Ok(real_part_checked(&f) * (2.0 * alpha / model.noise_level))
}

/// Rectilinear low-rank model: `Σ̃ = Ã Ξ Ãᴴ + λ I_{2m}`, `Ã = (A; A*)`, real `Ξ`.
#[derive(Clone)]
pub struct RectilinearModel {
    pub m: usize,
    pub p: usize,
    a_fn: CMatFn,
    a_jac: CMatListFn,
    pub gamma0: DVector<f64>,
    pub signal_cov: DMatrix<f64>,
    pub noise_level: f64,
}

impl std::fmt::Debug for RectilinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RectilinearModel")
            .field("m", &self.m)
            .field("p", &self.p)
            .field("gamma0", &self.gamma0)
            .field("signal_cov", &self.signal_cov)
            .field("noise_level", &self.noise_level)
            .finish()
    }
}

impl RectilinearModel {
    pub fn new(
        m: usize,
        p: usize,
        a_fn: CMatFn,
        a_jac: CMatListFn,
        gamma0: DVector<f64>,
        signal_cov: DMatrix<f64>,
        noise_level: f64,
    ) -> Self {
        RectilinearModel { m, p, a_fn, a_jac, gamma0, signal_cov, noise_level }
    }

    /// ULA with one direction per rectilinear (e.g. BPSK) source.
    pub fn ula(m: usize, doas: DVector<f64>, signal_cov: DMatrix<f64>, noise_level: f64) -> Self {
        let p = doas.len();
        let (a_fn, a_jac) = ula_fns(m, p);
        RectilinearModel::new(m, p, a_fn, a_jac, doas, signal_cov, noise_level)
    }

    pub fn q(&self) -> usize {
        self.gamma0.len()
    }

    pub fn steering(&self, gamma: &DVector<f64>) -> CMatrix {
        (self.a_fn)(gamma)
    }

    pub fn steering_derivatives(&self, gamma: &DVector<f64>) -> Vec<CMatrix> {
        (self.a_jac)(gamma)
    }

    fn stack(a: &CMatrix) -> CMatrix {
        let (m, p) = a.shape();
        let mut out = CMatrix::zeros(2 * m, p);
        out.rows_mut(0, m).copy_from(a);
        out.rows_mut(m, m).copy_from(&a.conjugate());
        out
    }

    /// `Ã(γ) = (A; A*)`.
    pub fn augmented_steering(&self, gamma: &DVector<f64>) -> CMatrix {
        Self::stack(&self.steering(gamma))
    }

    /// `Σ̃(γ)`.
    pub fn augmented_sigma(&self, gamma: &DVector<f64>) -> CMatrix {
        let at = self.augmented_steering(gamma);
        &at * to_complex(&self.signal_cov) * at.adjoint()
            + CMatrix::identity(2 * self.m, 2 * self.m) * c(self.noise_level, 0.0)
    }
}

/// Efficient FIM of `γ` in the rectilinear model,
/// `(α/λ) J[vec Ã]ᴴ (H̃₀ᵀ ⊗ Π⊥_Ã) J[vec Ã]` with `H̃₀ = Ξ Ãᴴ Σ̃⁻¹ Ã Ξ`.
pub fn rectilinear_fim(model: &RectilinearModel, gen: &DensityGenerator) -> Result<DMatrix<f64>> {
    let (m, p) = (model.m, model.p);
    if 2 * m <= p {
        return Err(CesError::InvalidDimension(format!("rectilinear model needs 2m > p, got m = {m}, p = {p}")));
    }
    if !(model.noise_level > 0.0) {
        return Err(CesError::Domain("noise level must be positive".into()));
    }
    if model.signal_cov.nrows() != p || linalg::min_eigenvalue(&model.signal_cov) <= 0.0 {
        return Err(CesError::NotPositiveDefinite("signal covariance".into()));
    }
    let at = model.augmented_steering(&model.gamma0);
    let sv = at.clone().svd(false, false).singular_values;
    if sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count() < p {
        return Err(CesError::Identifiability("augmented steering matrix is rank deficient".into()));
    }
    let alpha = complex_coefficients(gen, m)?.alpha;
    let xi = to_complex(&model.signal_cov);
    let st_inv = complex_spd_inverse(&model.augmented_sigma(&model.gamma0), "augmented scatter")?;
    let h0 = &xi * at.adjoint() * st_inv * &at * &xi;
    let proj = complement_projector(&at)?;
    let derivs: Vec<CMatrix> = model
        .steering_derivatives(&model.gamma0)
        .iter()
        .map(RectilinearModel::stack)
        .collect();
    let j = vec_jacobian(&derivs);
    let f = j.adjoint() * h0.transpose().kronecker(&proj) * j;
    Ok(real_part_checked(&f) * (alpha / model.noise_level))
}

/// Basis of the real vector space of `p x p` Hermitian matrices: `E_kk`, then for
/// each `i > j` the pair `E_ij + E_ji` and `i(E_ij - E_ji)`.
pub fn hermitian_basis(p: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(p * p);
    for k in 0..p {
        let mut e = CMatrix::zeros(p, p);
        e[(k, k)] = c(1.0, 0.0);
        out.push(e);
    }
    for j in 0..p {
        for i in j + 1..p {
            let mut e = CMatrix::zeros(p, p);
            e[(i, j)] = c(1.0, 0.0);
            e[(j, i)] = c(1.0, 0.0);
            out.push(e);
            let mut f = CMatrix::zeros(p, p);
            f[(i, j)] = c(0.0, 1.0);
            f[(j, i)] = c(0.0, -1.0);
            out.push(f);
        }
    }
    out
}

/// Coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coords(a: &CMatrix) -> DVector<f64> {
    let p = a.nrows();
    let mut v = Vec::with_capacity(p * p);
    for k in 0..p {
        v.push(a[(k, k)].re);
    }
    for j in 0..p {
        for i in j + 1..p {
            v.push(a[(i, j)].re);
            v.push(a[(i, j)].im);
        }
    }
    DVector::from_vec(v)
}

fn hermitian_from_coords(basis: &[CMatrix], t: &[f64]) -> CMatrix {
    let p = basis[0].nrows();
    basis.iter().zip(t).fold(CMatrix::zeros(p, p), |acc, (b, &x)| acc + b * c(x, 0.0))
}

fn embed_hermitian(a: &CMatrix) -> DMatrix<f64> {
    let m = a.nrows();
    real_scatter_unchecked(a, &CMatrix::zeros(m, m)).expect("square")
}

/// Real parameterization (dimension `2m`) of a circular location model:
/// `θ = (γ, ξ)`, `μ̄ = embed(μ(γ))`, `Σ̄ = embed(Σ(ξ))` with `ξ` the
/// Hermitian coordinates of `Σ`. Returns the parameterization and `θ₀`.
pub fn embedded_location_parameterization(
    mu_fn: CVecFn,
    jac_mu: CMatFn,
    gamma0: &DVector<f64>,
    sigma: &CMatrix,
) -> Result<(Parameterization, DVector<f64>)> {
    let m = sigma.nrows();
    check_hermitian(sigma, "sigma")?;
    let q = gamma0.len();
    let basis = Arc::new(hermitian_basis(m));
    let r = basis.len();
    let d = q + r;
    let (b1, b2) = (basis.clone(), basis);
    let param = Parameterization::new(
        "complex-location",
        2 * m,
        d,
        q,
        Arc::new(move |t: &DVector<f64>| embed_vector(&mu_fn(&t.rows(0, q).into_owned()))),
        Arc::new(move |t: &DVector<f64>| embed_hermitian(&hermitian_from_coords(&b1, &t.as_slice()[q..]))),
    )
    .with_jac_mu(Arc::new(move |t: &DVector<f64>| {
        let jc = jac_mu(&t.rows(0, q).into_owned());
        let mut j = DMatrix::zeros(2 * m, d);
        for k in 0..q {
            j.view_mut((0, k), (2 * m, 1)).copy_from(&embed_vector(&jc.column(k).into_owned()));
        }
        j
    }))
    .with_jac_vec_sigma(Arc::new(move |_t: &DVector<f64>| {
        let mut j = DMatrix::zeros(4 * m * m, d);
        for (k, b) in b2.iter().enumerate() {
            j.column_mut(q + k).copy_from(&matcalc::vec(&embed_hermitian(b)));
        }
        j
    }));
    let mut theta = DVector::zeros(d);
    theta.rows_mut(0, q).copy_from(gamma0);
    theta.rows_mut(q, r).copy_from(&hermitian_coords(sigma));
    Ok((param, theta))
}

/// Real parameterization (dimension `2m`) of a non-circular location model:
/// `μ̄ = embed(μ(γ))`, nuisance `vecs(Σ̄)` unrestricted.
pub fn embedded_nc_location_parameterization(
    mu_fn: CVecFn,
    jac_mu: CMatFn,
    gamma0: &DVector<f64>,
    sigma: &CMatrix,
    omega: &CMatrix,
) -> Result<(Parameterization, DVector<f64>)> {
    let m = sigma.nrows();
    let sb = real_scatter(sigma, omega)?;
    let n = 2 * m;
    let q = gamma0.len();
    let r = matcalc::half_len(n);
    let d = q + r;
    let dup = Arc::new(matcalc::duplication_matrix(n)?);
    let dup2 = dup.clone();
    let param = Parameterization::new(
        "complex-nc-location",
        n,
        d,
        q,
        Arc::new(move |t: &DVector<f64>| embed_vector(&mu_fn(&t.rows(0, q).into_owned()))),
        Arc::new(move |t: &DVector<f64>| DMatrix::from_column_slice(n, n, (&*dup * t.rows(q, r)).as_slice())),
    )
    .with_jac_mu(Arc::new(move |t: &DVector<f64>| {
        let jc = jac_mu(&t.rows(0, q).into_owned());
        let mut j = DMatrix::zeros(n, d);
        for k in 0..q {
            j.view_mut((0, k), (n, 1)).copy_from(&embed_vector(&jc.column(k).into_owned()));
        }
        j
    }))
    .with_jac_vec_sigma(Arc::new(move |_t: &DVector<f64>| {
        let mut j = DMatrix::zeros(n * n, d);
        j.columns_mut(q, r).copy_from(&*dup2);
        j
    }));
    let mut theta = DVector::zeros(d);
    theta.rows_mut(0, q).copy_from(gamma0);
    theta.rows_mut(q, r).copy_from(&matcalc::vecs(&sb));
    Ok((param, theta))
}

/// Real parameterization (dimension `2m`) of the circular low-rank model with
/// `θ = (γ, Hermitian coordinates of Ξ, λ)` and analytic Jacobians. Returns `(param, θ₀)`.
pub fn embedded_lowrank_parameterization(model: &ComplexLowRank) -> Result<(Parameterization, DVector<f64>)> {
    model.validate()?;
    let (m, p, q) = (model.m, model.p, model.q());
    let basis = Arc::new(hermitian_basis(p));
    let nx = basis.len();
    let d = q + nx + 1;
    let (mf1, mf2) = (model.clone(), model.clone());
    let (b1, b2) = (basis.clone(), basis);
    let sigma_fn: MatFn = Arc::new(move |t: &DVector<f64>| {
        let g = t.rows(0, q).into_owned();
        let xi = hermitian_from_coords(&b1, &t.as_slice()[q..q + nx]);
        let a = mf1.steering(&g);
        let s = &a * xi * a.adjoint() + CMatrix::identity(m, m) * c(t[d - 1], 0.0);
        embed_hermitian(&s)
    });
    let jac: MatFn = Arc::new(move |t: &DVector<f64>| {
        let g = t.rows(0, q).into_owned();
        let xi = hermitian_from_coords(&b2, &t.as_slice()[q..q + nx]);
        let a = mf2.steering(&g);
        let mut j = DMatrix::zeros(4 * m * m, d);
        for (k, ak) in mf2.steering_derivatives(&g).iter().enumerate() {
            let dk = ak * &xi * a.adjoint() + &a * &xi * ak.adjoint();
            j.column_mut(k).copy_from(&matcalc::vec(&embed_hermitian(&dk)));
        }
        for (k, b) in b2.iter().enumerate() {
            j.column_mut(q + k).copy_from(&matcalc::vec(&embed_hermitian(&(&a * b * a.adjoint()))));
        }
        j.column_mut(d - 1).copy_from(&matcalc::vec(&embed_hermitian(&CMatrix::identity(m, m))));
        j
    });
    let param = Parameterization::new("complex-low-rank", 2 * m, d, q, Arc::new(move |_t: &DVector<f64>| DVector::zeros(2 * m)), sigma_fn)
        .with_jac_mu(Arc::new(move |_t: &DVector<f64>| DMatrix::zeros(2 * m, d)))
        .with_jac_vec_sigma(jac);
    let mut theta = DVector::zeros(d);
    theta.rows_mut(0, q).copy_from(&model.gamma0);
    theta.rows_mut(q, nx).copy_from(&hermitian_coords(&model.signal_cov));
    theta[d - 1] = model.noise_level;
    Ok((param, theta))
}

/// The rectilinear model seen as a real low-rank model in dimension `2m`:
/// `Σ̄ = Ā Ξ Āᵀ + (λ/2) I` with `Ā = (Re A; Im A)`.
pub fn embedded_rectilinear_model(model: &RectilinearModel) -> LowRankModel {
    let (m, p) = (model.m, model.p);
    let (f1, f2) = (model.a_fn.clone(), model.a_jac.clone());
    let stack_real = move |a: &CMatrix| {
        let mut out = DMatrix::zeros(2 * m, p);
        out.rows_mut(0, m).copy_from(&a.map(|z| z.re));
        out.rows_mut(m, m).copy_from(&a.map(|z| z.im));
        out
    };
    let a_fn: MatFn = Arc::new(move |g: &DVector<f64>| stack_real(&f1(g)));
    let a_jac: MatListFn = Arc::new(move |g: &DVector<f64>| f2(g).iter().map(&stack_real).collect());
    LowRankModel::new(2 * m, p, a_fn, a_jac, model.gamma0.clone(), model.signal_cov.clone(), 0.5 * model.noise_level)
}
