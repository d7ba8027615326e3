//! Invariant suite: algebraic identities of every module (fast) plus Monte Carlo checks (full).
//!
//! Failures are report entries; the runner itself never errors.

use std::fmt::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::adaptivity::{self, LowRankModel, Parameterization};
use crate::bounds;
use crate::complex_ces::{self, CMatrix, ComplexLowRank, RectilinearModel, C64};
use crate::elliptical::DensityGenerator;
use crate::error::{CesError, Result};
use crate::estimators::{self, ScoreFunction, ScoreTable};
use crate::linalg;
use crate::matcalc;
use crate::scale_shape::{self, ScaleFunctional};
use crate::scores_fim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

impl FromStr for Level {
    type Err = CesError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(CesError::Config(format!("unknown level '{other}'; valid levels: fast, full"))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Fast => "fast",
            Level::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub level: Level,
    /// Mutation hook: perturb one entry of `D_m` before the duplication checks.
    pub corrupt_duplication: bool,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { level: Level::Fast, corrupt_duplication: false, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: String,
    pub passed: bool,
    /// Worst observed error (or statistic) against its tolerance.
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub level: Level,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {:<12} {:<58} {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.module,
                c.name,
                c.detail
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(
            out,
            "{} level: {} checks, {} passed, {} failed",
            self.level,
            self.checks.len(),
            self.checks.len() - failed,
            failed
        );
        out
    }
}

struct Suite {
    checks: Vec<CheckResult>,
    rng: ChaCha8Rng,
}

impl Suite {
    /// Records `err < tol`; an `Err` from the computation is a failure with its message.
    fn within(&mut self, module: &'static str, name: impl Into<String>, tol: f64, err: Result<f64>) {
        let (passed, detail) = match err {
            Ok(e) => (e < tol, format!("err {e:.3e} (tol {tol:.0e})")),
            Err(e) => (false, format!("error: {e}")),
        };
        self.checks.push(CheckResult { module, name: name.into(), passed, detail });
    }

    fn holds(&mut self, module: &'static str, name: impl Into<String>, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckResult { module, name: name.into(), passed, detail });
    }

    fn symmetric(&mut self, m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        (&a + a.transpose()) * 0.5
    }

    fn spd(&mut self, m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.5
    }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn generators() -> Vec<DensityGenerator> {
    vec![
        DensityGenerator::gaussian(),
        DensityGenerator::student_t(6.0).expect("valid"),
        DensityGenerator::student_t(8.0).expect("valid"),
        DensityGenerator::generalized_gaussian(0.5).expect("valid"),
    ]
}

pub fn run_invariant_suite(opts: &VerifyOptions) -> SuiteReport {
    let mut s = Suite { checks: Vec::new(), rng: ChaCha8Rng::seed_from_u64(opts.seed) };
    matcalc_checks(&mut s, opts.corrupt_duplication);
    elliptical_checks(&mut s);
    scale_shape_checks(&mut s);
    fim_and_bound_checks(&mut s);
    adaptivity_checks(&mut s);
    complex_checks(&mut s);
    estimator_checks(&mut s);
    if opts.level == Level::Full {
        monte_carlo_checks(&mut s);
    }
    SuiteReport { level: opts.level, checks: s.checks }
}

fn matcalc_checks(s: &mut Suite, corrupt: bool) {
    for m in 2..=5 {
        let a = s.symmetric(m);
        let dup = matcalc::duplication_matrix(m).map(|mut d| {
            if corrupt {
                d[(1, 1)] += 0.5;
            }
            d
        });
        let err = dup.as_ref().map(|d| (d * matcalc::vecs(&a) - matcalc::vec(&a)).amax()).map_err(Clone::clone);
        s.within("matcalc", format!("D_m vecs(A) = vec(A), m = {m}"), 1e-14, err);
        let err = matcalc::dup_pinv(m).and_then(|p| {
            let d = dup.clone()?;
            Ok((p * d - DMatrix::identity(matcalc::half_len(m), matcalc::half_len(m))).amax())
        });
        s.within("matcalc", format!("D_m^# D_m = I, m = {m}"), 1e-14, err);
        let b = DMatrix::from_fn(m, m, |_, _| s.rng.sample::<f64, _>(StandardNormal));
        let err = matcalc::commutation_matrix(m).map(|k| (k * matcalc::vec(&b) - matcalc::vec(&b.transpose())).amax());
        s.within("matcalc", format!("K_m vec(B) = vec(B^T), m = {m}"), 1e-14, err);
        let err = matcalc::unvecs(&matcalc::vecs(&a), m).map(|b| (b - &a).amax());
        s.within("matcalc", format!("unvecs(vecs(A)) = A, m = {m}"), 1e-15, err);
    }
}

fn elliptical_checks(s: &mut Suite) {
    for gen in generators() {
        for m in [2usize, 4, 8] {
            let mf = m as f64;
            let phi = |q: f64| gen.phi_bar(q, m).unwrap_or(0.0);
            let moments = [
                ("E{Q} = m", gen.expect(m, |q| q), mf),
                ("E{Q phi} = m", gen.expect(m, |q| q * phi(q)), mf),
                ("E{Q^2 phi} = m(m+2)", gen.expect(m, |q| q * q * phi(q)), mf * (mf + 2.0)),
            ];
            for (name, value, target) in moments {
                s.within("elliptical", format!("{name}, {} m = {m}", gen.name()), 1e-6, Ok((value - target).abs() / target));
            }
            let err = gen.coefficients(m).map(|c| {
                let q = gen.coefficients_by_quadrature(m);
                let mut e = ((c.alpha - q.alpha) / c.alpha).abs().max(((c.beta - q.beta) / c.beta).abs());
                if let (Some(a), Some(b)) = (c.sigma_q2, q.sigma_q2) {
                    e = e.max(((a - b) / a).abs());
                }
                e
            });
            s.within("elliptical", format!("closed-form coefficients, {} m = {m}", gen.name()), 1e-8, err);
        }
    }
}

fn scale_shape_checks(s: &mut Suite) {
    for kind in ScaleFunctional::ALL {
        let sigma = s.spd(4);
        let err = scale_shape::decompose(kind, &sigma).map(|d| rel(&(&d.v * d.s), &sigma).max((kind.value(&d.v).unwrap_or(f64::NAN) - 1.0).abs()));
        s.within("scale_shape", format!("Sigma = s V with S(V) = 1, {kind}"), 1e-12, err);
        let err = scale_shape::renormalize(kind, &sigma).and_then(|v| scale_shape::u_basis(kind, &v)).map(|u| {
            let p = u.ncols();
            (u.transpose() * &u - DMatrix::identity(p, p)).amax()
        });
        s.within("scale_shape", format!("U orthonormal, {kind}"), 1e-12, err);
    }
}

fn fim_and_bound_checks(s: &mut Suite) {
    for kind in ScaleFunctional::ALL {
        for gen in generators() {
            for m in 2..=4 {
                let sigma = s.spd(m);
                let v = scale_shape::renormalize(kind, &sigma).expect("spd");
                let label = format!("{kind}, {} m = {m}", gen.name());
                let efim = scores_fim::efficient_fim_shape(&v, kind, &gen, m);
                let eta = scores_fim::fim_eta(&DVector::zeros(m), &v, 1.0, kind, &gen, m);
                let err = match (&efim, &eta) {
                    (Ok(e), Ok(b)) => Ok(rel(e, &b.shape_schur())),
                    (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                };
                s.within("scores_fim", format!("efficient FIM = Schur complement, {label}"), 1e-10, err);
                let err = efim.and_then(|e| Ok(linalg::rel_frobenius_identity(&(bounds::crb_shape(kind, &v, &gen, m)? * e))));
                s.within("bounds", format!("CRB(V) inverts efficient FIM, {label}"), 1e-8, err);
                let err = scores_fim::fim_vecs_sigma(&sigma, &gen, m)
                    .and_then(|f| Ok(linalg::rel_frobenius_identity(&(bounds::crb_vecs_sigma(&sigma, &gen, m)? * f))));
                s.within("bounds", format!("CRB(vecs Sigma) inverts its FIM, {label}"), 1e-8, err);
            }
        }
    }
    let gen = DensityGenerator::student_t(6.0).expect("valid");
    let sigma = linalg::toeplitz(4, 0.8);
    let v = scale_shape::renormalize(ScaleFunctional::DetRoot, &sigma).expect("spd");
    let err = bounds::crb_shape_detroot(&v, &gen, 4).and_then(|d| Ok(rel(&d, &bounds::crb_shape(ScaleFunctional::DetRoot, &v, &gen, 4)?)));
    s.within("bounds", "det-root shape bound specialization", 1e-12, err);
    let err = bounds::crb_scale_detroot(&sigma, &gen, 4).and_then(|d| {
        let (g, psi) = bounds::crb_scale(ScaleFunctional::DetRoot, &v, &sigma, &gen, 4)?;
        Ok(((d - g) / g).abs().max(psi.amax()))
    });
    s.within("bounds", "det-root scale bound and vanishing Psi", 1e-12, err);
    for kind in ScaleFunctional::ALL {
        let v = scale_shape::renormalize(kind, &sigma).expect("spd");
        let out = bounds::verify_chain(kind, &v, &generators(), 4).map(|r| {
            let worst = r.generators.iter().flat_map(|g| g.links.iter()).map(|l| l.rel_error).fold(0.0, f64::max);
            (r.passed, format!("largest link error {worst:.3e}"))
        });
        s.holds("bounds", format!("bound chain, {kind}"), out);
    }
}

fn adaptivity_checks(s: &mut Suite) {
    let t8 = DensityGenerator::student_t(8.0).expect("valid");
    let gauss = DensityGenerator::gaussian();
    let m = 4;
    let split = Parameterization::split_linear(DMatrix::identity(m, m), vec![DMatrix::identity(m, m), linalg::toeplitz(m, 0.5)]);
    let theta = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0, 1.5, 0.4]);
    let low_rank = LowRankModel::sinusoidal(6, DVector::from_vec(vec![0.4, 1.1]), DMatrix::identity(2, 2), 0.5);
    let lr = adaptivity::low_rank_parameterization(&low_rank).map(|p| (p, low_rank.theta0()));
    for (name, built) in [("split", split.map(|p| (p, theta))), ("low-rank", lr)] {
        let out = built.and_then(|(p, th)| {
            let r = adaptivity::verify_adaptivity_by_fim(&p, &th, &t8, p.m)?;
            Ok((
                r.condition.satisfied && r.adaptive,
                format!("residual {:.3e}, FIM gap {:.3e}", r.condition.residual_inf, r.relative_gap),
            ))
        });
        s.holds("adaptivity", format!("{name} model is adaptive under t(8)"), out);
    }
    let breaking = Parameterization::breaking(linalg::toeplitz(m, 0.8));
    let mut th = DVector::zeros(m + 1);
    th[0] = 1.5;
    let out = adaptivity::verify_adaptivity_by_fim(&breaking, &th, &t8, m).and_then(|r| {
        let g = adaptivity::verify_adaptivity_by_fim(&breaking, &th, &gauss, m)?;
        Ok((
            !r.condition.satisfied && !r.adaptive && g.adaptive,
            format!("t(8) residual {:.3e}, gap {:.3e}; Gaussian gap {:.3e}", r.condition.residual_inf, r.relative_gap, g.relative_gap),
        ))
    });
    s.holds("adaptivity", "breaking model: gap under t(8), none under Gaussian", out);
}

fn complex_checks(s: &mut Suite) {
    let gens = generators();
    let m = 5;
    let mut cov = CMatrix::identity(2, 2);
    cov[(0, 1)] = C64::new(0.3, 0.2);
    cov[(1, 0)] = C64::new(0.3, -0.2);
    let model = ComplexLowRank::ula(m, DVector::from_vec(vec![-0.3, 0.6]), cov, 0.7);
    for g in &gens {
        let err = complex_ces::doa_fim(&model, g).and_then(|d| Ok(rel(&d, &complex_ces::cces_lowrank_fim(&model, g)?)));
        s.within("complex_ces", format!("DOA Hadamard form = Kronecker form, {}", g.name()), 1e-12, err);
        let err = complex_ces::embedded_lowrank_parameterization(&model).and_then(|(param, th)| {
            let closed = complex_ces::cces_lowrank_fim(&model, g)?;
            let eff = scores_fim::efficient_fim_interest(&scores_fim::fim_theta(&param, &th, g, 2 * m)?, 2)?;
            Ok(rel(&closed, &eff))
        });
        s.within("complex_ces", format!("circular low-rank FIM = real embedding, {}", g.name()), 1e-8, err);
    }
    let rect = RectilinearModel::ula(4, DVector::from_vec(vec![-0.4, 0.5]), DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]), 0.8);
    for g in &gens {
        let real = complex_ces::embedded_rectilinear_model(&rect);
        let err = complex_ces::rectilinear_fim(&rect, g).and_then(|closed| {
            let param = adaptivity::low_rank_parameterization(&real)?;
            let eff = scores_fim::efficient_fim_interest(&scores_fim::fim_theta(&param, &real.theta0(), g, 8)?, 2)?;
            Ok(rel(&closed, &eff))
        });
        s.within("complex_ces", format!("rectilinear FIM = real model, {}", g.name()), 1e-8, err);
    }
}

fn estimator_checks(s: &mut Suite) {
    let sigma = linalg::toeplitz(4, 0.8);
    let gen = DensityGenerator::student_t(3.0).expect("valid");
    let data = gen.sample_with(&mut s.rng, 200, &DVector::zeros(4), &sigma).expect("valid model");
    for kind in ScaleFunctional::ALL {
        let out = estimators::tyler_shape(&data, kind, estimators::TYLER_TOL, estimators::TYLER_MAX_ITER)
            .and_then(|t| estimators::tyler_residual(&data, kind, &t.v_hat));
        s.within("estimators", format!("Tyler fixed point residual, {kind}"), 1e-8, out);
    }
    let err = estimators::upsilon(&sigma).map(|u| (u * matcalc::vec(&DMatrix::identity(4, 4))).amax());
    s.within("estimators", "Upsilon annihilates vec(I)", 1e-13, err);
    for score in [ScoreFunction::VanDerWaerden, ScoreFunction::TScore(5.0)] {
        let out = ScoreTable::new(score, 4, 100).map(|t| {
            let vals: Vec<f64> = (1..=100).map(|r| t.at_rank(r)).collect();
            let ok = vals.windows(2).all(|w| w[0] <= w[1]) && vals[0] >= 0.0;
            (ok, format!("K range [{:.4}, {:.4}]", vals[0], vals[99]))
        });
        s.holds("estimators", format!("score table nonnegative and monotone, {score}"), out);
    }
}

/// z threshold for `k` simultaneous checks with the family-wise error of one 3-sigma check.
fn bonferroni_z(k: usize) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let p = 2.0 * (1.0 - n.cdf(3.0));
    n.inverse_cdf(1.0 - p / (2.0 * k.max(1) as f64))
}

/// Largest z-score between the mean of `samples` (outer products) and `target` over the upper triangle.
fn outer_product_z(samples: &[DVector<f64>], target: &DMatrix<f64>) -> (f64, usize) {
    let n = samples.len() as f64;
    let d = target.nrows();
    let mut mean = DMatrix::zeros(d, d);
    let mut sq = DMatrix::zeros(d, d);
    for x in samples {
        let o = x * x.transpose();
        sq += o.map(|v| v * v);
        mean += o;
    }
    mean /= n;
    sq /= n;
    let mut z: f64 = 0.0;
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let se = ((sq[(i, j)] - mean[(i, j)].powi(2)).max(0.0) / n).sqrt();
            if se < 1e-12 && target[(i, j)].abs() < 1e-12 {
                continue;
            }
            k += 1;
            z = z.max((mean[(i, j)] - target[(i, j)]).abs() / se.max(1e-12));
        }
    }
    (z, k)
}

fn monte_carlo_checks(s: &mut Suite) {
    let m = 4;
    let n = 20_000;
    let sigma = linalg::toeplitz(m, 0.8);
    let mu = DVector::from_fn(m, |i, _| 0.1 * i as f64);
    for gen in [DensityGenerator::gaussian(), DensityGenerator::student_t(8.0).expect("valid")] {
        let out = gen.sample_with(&mut s.rng, n, &mu, &sigma).map(|x| {
            let rows: Vec<DVector<f64>> = (0..n).map(|i| x.row(i).transpose() - &mu).collect();
            let (z, k) = outer_product_z(&rows, &sigma);
            (z < bonferroni_z(k), format!("max z {z:.2} over {k} entries (limit {:.2})", bonferroni_z(k)))
        });
        s.holds("elliptical", format!("sample scatter matches Sigma, {}", gen.name()), out);

        for kind in ScaleFunctional::ALL {
            let out = (|| -> Result<(bool, String)> {
                let d = scale_shape::decompose(kind, &sigma)?;
                let x = gen.sample_with(&mut s.rng, n, &mu, &sigma)?;
                let scores = (0..n)
                    .map(|i| scores_fim::score_eta(&x.row(i).transpose(), &mu, &d.v, d.s, kind, &gen))
                    .collect::<Result<Vec<_>>>()?;
                let fim = scores_fim::fim_eta(&mu, &d.v, d.s, kind, &gen, m)?.assemble();
                let (z, k) = outer_product_z(&scores, &fim);
                Ok((z < bonferroni_z(k), format!("max z {z:.2} over {k} entries (limit {:.2})", bonferroni_z(k))))
            })();
            s.holds("scores_fim", format!("score outer product matches FIM(eta), {kind}, {}", gen.name()), out);
        }
    }
}
