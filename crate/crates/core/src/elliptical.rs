//! Density generators of real elliptical distributions, their scalar
//! functionals and sampling through the stochastic representation
//! `x = μ + √Q Σ^{1/2} u`.
//!
//! A generator `ḡ` enters the density as `p(x) = |Σ|^{-1/2} ḡ(Q)` with
//! `Q = (x-μ)ᵀ Σ⁻¹ (x-μ)`. Constrained generators satisfy `E{Q} = m`, so
//! `Σ` is the covariance matrix. The functionals used throughout the crate are
//!
//! * `φ̄(t) = -2 ḡ'(t) / ḡ(t)`
//! * `α = E{Q² φ̄(Q)²} / (m(m+2))`
//! * `β = E{Q φ̄(Q)²} / m`
//! * `σ_Q² = E{Q²} - m²`

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{CesError, Result};
use crate::linalg;
use crate::quad::{integrate_half_line, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    StudentT { nu: f64 },
    GeneralizedGaussian { shape: f64 },
}

/// A density generator from one of the built-in families.
///
/// With `constrained = true` (the default) the generator is normalized so that
/// `E{Q} = m`. The unconstrained form is the family's textbook radial law
/// (`(1 + t/ν)^{-(m+ν)/2}` for Student t, `exp(-t^s / 2)` for the generalized
/// Gaussian); it differs from the constrained one by a rescaling of `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityGenerator {
    pub family: Family,
    pub constrained: bool,
}

/// The scalar functionals of a generator at dimension `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    /// `E{Q²} - m²` for the constrained law; `None` when the second moment is infinite.
    pub sigma_q2: Option<f64>,
}

/// A realization of the second-order modular variate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModularVariate {
    pub q: f64,
    pub m: usize,
}

impl DensityGenerator {
    pub fn gaussian() -> Self {
        DensityGenerator { family: Family::Gaussian, constrained: true }
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 2.0) || !nu.is_finite() {
            return Err(CesError::Domain(format!(
                "constrained Student t needs 2 < nu < inf, got {nu}"
            )));
        }
        Ok(DensityGenerator { family: Family::StudentT { nu }, constrained: true })
    }

    pub fn generalized_gaussian(shape: f64) -> Result<Self> {
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(CesError::Domain(format!(
                "generalized Gaussian needs shape > 0, got {shape}"
            )));
        }
        Ok(DensityGenerator { family: Family::GeneralizedGaussian { shape }, constrained: true })
    }

    pub fn unconstrained(self) -> Self {
        DensityGenerator { constrained: false, ..self }
    }

    pub fn name(&self) -> String {
        match self.family {
            Family::Gaussian => "gaussian".to_string(),
            Family::StudentT { nu } => format!("t:{nu}"),
            Family::GeneralizedGaussian { shape } => format!("gg:{shape}"),
        }
    }

    /// Parses `gaussian`, `t:<nu>` or `gg:<shape>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "gaussian" || s == "normal" {
            return Ok(Self::gaussian());
        }
        let (head, tail) = s.split_once(':').ok_or_else(|| {
            CesError::Config(format!(
                "unknown generator '{s}'; expected gaussian, t:<nu> or gg:<shape>"
            ))
        })?;
        let p: f64 = tail
            .parse()
            .map_err(|_| CesError::Config(format!("bad generator parameter '{tail}'")))?;
        match head {
            "t" | "student_t" => Self::student_t(p),
            "gg" | "generalized_gaussian" => Self::generalized_gaussian(p),
            _ => Err(CesError::Config(format!(
                "unknown generator '{head}'; expected gaussian, t:<nu> or gg:<shape>"
            ))),
        }
    }

    // Generalized Gaussian constant b of exp(-t^s / (2b)) giving E{Q} = m.
    fn gg_b(shape: f64, m: usize) -> f64 {
        let a = m as f64 / (2.0 * shape);
        let log_two_b = shape * ((m as f64).ln() + ln_gamma(a) - ln_gamma(a + 1.0 / shape));
        0.5 * log_two_b.exp()
    }

    /// Ratio `κ` with `Q_unconstrained = κ Q_constrained` in law.
    fn kappa(&self, m: usize) -> f64 {
        if self.constrained {
            return 1.0;
        }
        match self.family {
            Family::Gaussian => 1.0,
            Family::StudentT { nu } => nu / (nu - 2.0),
            Family::GeneralizedGaussian { shape } => (2.0 * Self::gg_b(shape, m)).powf(-1.0 / shape),
        }
    }

    fn constrained_log_g(&self, t: f64, m: usize) -> f64 {
        let mf = m as f64;
        match self.family {
            Family::Gaussian => -0.5 * mf * (2.0 * std::f64::consts::PI).ln() - 0.5 * t,
            Family::StudentT { nu } => {
                ln_gamma(0.5 * (nu + mf)) - ln_gamma(0.5 * nu)
                    - 0.5 * mf * (std::f64::consts::PI * (nu - 2.0)).ln()
                    - 0.5 * (mf + nu) * (t / (nu - 2.0)).ln_1p()
            }
            Family::GeneralizedGaussian { shape } => {
                let a = mf / (2.0 * shape);
                let b = Self::gg_b(shape, m);
                shape.ln() + ln_gamma(0.5 * mf) - 0.5 * mf * std::f64::consts::PI.ln()
                    - a * (2.0 * b).ln()
                    - ln_gamma(a)
                    - t.powf(shape) / (2.0 * b)
            }
        }
    }

    /// `log ḡ(t)`, normalized so that `|Σ|^{-1/2} ḡ(Q)` is a probability density on `R^m`.
    pub fn log_g(&self, t: f64, m: usize) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(CesError::Domain(format!("generator argument must be >= 0, got {t}")));
        }
        let k = self.kappa(m);
        Ok(self.constrained_log_g(t / k, m) - 0.5 * m as f64 * k.ln())
    }

    fn constrained_phi(&self, t: f64, m: usize) -> Result<f64> {
        let mf = m as f64;
        match self.family {
            Family::Gaussian => Ok(1.0),
            Family::StudentT { nu } => Ok((mf + nu) / (nu - 2.0 + t)),
            Family::GeneralizedGaussian { shape } => {
                if t == 0.0 && shape < 1.0 {
                    return Err(CesError::Domain(
                        "phi_bar is unbounded at t = 0 for generalized Gaussian shape < 1".into(),
                    ));
                }
                let b = Self::gg_b(shape, m);
                Ok(shape * t.powf(shape - 1.0) / b)
            }
        }
    }

    /// `φ̄(t) = -2 ḡ'(t) / ḡ(t)`.
    pub fn phi_bar(&self, t: f64, m: usize) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(CesError::Domain(format!("phi_bar argument must be >= 0, got {t}")));
        }
        let k = self.kappa(m);
        Ok(self.constrained_phi(t / k, m)? / k)
    }

    /// `t φ̄(t)`, finite at `t = 0` for every family.
    pub fn t_phi_bar(&self, t: f64, m: usize) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(t * self.phi_bar(t, m)?)
    }

    /// Density of `Q` at `q`.
    pub fn q_density(&self, q: f64, m: usize) -> Result<f64> {
        if q < 0.0 {
            return Ok(0.0);
        }
        let mf = m as f64;
        if q == 0.0 {
            // q^{m/2 - 1} vanishes for m > 2 and blows up for m = 1
            return Ok(match m {
                1 => f64::INFINITY,
                2 => (std::f64::consts::PI.ln() + self.log_g(0.0, m)?).exp(),
                _ => 0.0,
            });
        }
        let log_c = 0.5 * mf * std::f64::consts::PI.ln() - ln_gamma(0.5 * mf);
        Ok((log_c + (0.5 * mf - 1.0) * q.ln() + self.log_g(q, m)?).exp())
    }

    /// `E{h(Q)}` by adaptive quadrature over the density of `Q`.
    pub fn expect(&self, m: usize, h: impl Fn(f64) -> f64) -> f64 {
        let opts = QuadOptions::default();
        integrate_half_line(
            |q| {
                if q <= 0.0 {
                    return 0.0;
                }
                let d = self.q_density(q, m).unwrap_or(0.0);
                if d == 0.0 {
                    0.0
                } else {
                    h(q) * d
                }
            },
            m as f64,
            opts,
        )
        .value
    }

    fn constrained_sigma_q2(&self, m: usize) -> Option<f64> {
        let mf = m as f64;
        match self.family {
            Family::Gaussian => Some(2.0 * mf),
            Family::StudentT { nu } => {
                if nu > 4.0 {
                    Some(2.0 * mf * (mf + nu - 2.0) / (nu - 4.0))
                } else {
                    None
                }
            }
            Family::GeneralizedGaussian { shape } => {
                let a = mf / (2.0 * shape);
                let two_b = 2.0 * Self::gg_b(shape, m);
                let e_q2 = (2.0 / shape * two_b.ln() + ln_gamma(a + 2.0 / shape) - ln_gamma(a)).exp();
                Some(e_q2 - mf * mf)
            }
        }
    }

    /// Closed-form `α`, `β` and `σ_Q²` at dimension `m`.
    pub fn coefficients(&self, m: usize) -> Result<Coefficients> {
        if m == 0 {
            return Err(CesError::InvalidDimension("m must be >= 1".into()));
        }
        let mf = m as f64;
        let (alpha, beta) = match self.family {
            Family::Gaussian => (1.0, 1.0),
            Family::StudentT { nu } => {
                let alpha = (mf + nu) / (mf + nu + 2.0);
                (alpha, alpha * nu / (nu - 2.0))
            }
            Family::GeneralizedGaussian { shape } => {
                let alpha = (mf + 2.0 * shape) / (mf + 2.0);
                let a = mf / (2.0 * shape);
                let k = a + 2.0 - 1.0 / shape;
                if k <= 0.0 {
                    return Err(CesError::MomentUndefined(format!(
                        "beta is infinite for generalized Gaussian shape {shape} at m = {m}"
                    )));
                }
                let b = Self::gg_b(shape, m);
                let log_e = (2.0 - 1.0 / shape) * (2.0 * b).ln() + ln_gamma(k) - ln_gamma(a);
                let beta = shape * shape / (b * b) * log_e.exp() / mf;
                (alpha, beta)
            }
        };
        let k = self.kappa(m);
        Ok(Coefficients {
            alpha,
            beta: beta / k,
            sigma_q2: self.constrained_sigma_q2(m).map(|s| s * k * k),
        })
    }

    /// `σ_Q²`, failing when the second moment of `Q` is infinite.
    pub fn sigma_q2(&self, m: usize) -> Result<f64> {
        self.coefficients(m)?.sigma_q2.ok_or_else(|| {
            CesError::MomentUndefined(format!("sigma_Q^2 is infinite for {} (needs nu > 4)", self.name()))
        })
    }

    /// `α`, `β`, `σ_Q²` computed by quadrature instead of closed forms.
    pub fn coefficients_by_quadrature(&self, m: usize) -> Coefficients {
        let mf = m as f64;
        let phi = |q: f64| self.phi_bar(q, m).unwrap_or(0.0);
        let alpha = self.expect(m, |q| (q * phi(q)).powi(2)) / (mf * (mf + 2.0));
        let beta = self.expect(m, |q| q * phi(q).powi(2)) / mf;
        let sigma_q2 = self.sigma_q2(m).ok().map(|_| {
            let e1 = self.expect(m, |q| q);
            self.expect(m, |q| q * q) - e1 * e1
        });
        Coefficients { alpha, beta, sigma_q2 }
    }

    /// Draws one realization of `Q` given `‖z‖²` of the Gaussian used for the direction.
    fn draw_q<R: Rng + ?Sized>(&self, rng: &mut R, z_norm2: f64, m: usize) -> f64 {
        match self.family {
            Family::Gaussian => z_norm2,
            Family::StudentT { nu } => {
                let w: f64 = ChiSquared::new(nu).expect("nu > 2").sample(rng);
                (nu - 2.0) * z_norm2 / w
            }
            Family::GeneralizedGaussian { shape } => {
                let a = m as f64 / (2.0 * shape);
                let y: f64 = Gamma::new(a, 1.0).expect("a > 0").sample(rng);
                (2.0 * Self::gg_b(shape, m) * y).powf(1.0 / shape)
            }
        }
    }

    /// `n` iid draws (rows) using an explicit RNG.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
        mu: &DVector<f64>,
        sigma: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        if !self.constrained {
            return Err(CesError::Domain("only constrained generators can be sampled".into()));
        }
        let m = mu.len();
        if sigma.nrows() != m || sigma.ncols() != m {
            return Err(CesError::InvalidDimension(format!(
                "mu has length {m} but sigma is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let root = linalg::sym_sqrt(sigma)?;
        let mut out = DMatrix::zeros(n, m);
        let mut z = DVector::zeros(m);
        for row in 0..n {
            for k in 0..m {
                z[k] = rng.sample(StandardNormal);
            }
            let norm2 = z.norm_squared();
            let q = self.draw_q(rng, norm2, m);
            let x = mu + &root * &z * (q / norm2).sqrt();
            out.row_mut(row).copy_from(&x.transpose());
        }
        Ok(out)
    }

    /// `n` iid draws (rows), deterministic given `seed`.
    pub fn sample(
        &self,
        n: usize,
        mu: &DVector<f64>,
        sigma: &DMatrix<f64>,
        seed: u64,
    ) -> Result<DMatrix<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n, mu, sigma)
    }
}

/// `Q = (x-μ)ᵀ Σ⁻¹ (x-μ)`.
pub fn modular_variate(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<ModularVariate> {
    let y = x - mu;
    let chol = linalg::symmetrize(sigma)
        .cholesky()
        .ok_or_else(|| CesError::NotPositiveDefinite("scatter matrix".into()))?;
    let w = chol.solve(&y);
    Ok(ModularVariate { q: y.dot(&w).max(0.0), m: y.len() })
}

/// Free function form of [`DensityGenerator::phi_bar`].
pub fn phi_bar(gen: &DensityGenerator, t: f64, m: usize) -> Result<f64> {
    gen.phi_bar(t, m)
}

/// Free function form of [`DensityGenerator::coefficients`].
pub fn coefficients(gen: &DensityGenerator, m: usize) -> Result<Coefficients> {
    gen.coefficients(m)
}

/// Free function form of [`DensityGenerator::sample`].
pub fn sample(
    n: usize,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gen: &DensityGenerator,
    seed: u64,
) -> Result<DMatrix<f64>> {
    gen.sample(n, mu, sigma, seed)
}
