mod common;

use std::sync::Arc;

use cesbound::adaptivity::{low_rank_parameterization, Parameterization};
use cesbound::linalg::{self, min_eigenvalue, spd_inverse};
use cesbound::matcalc::{duplication_matrix, half_len, ovecs, vec, vecs};
use cesbound::scale_shape::{self, complete_shape, jacobian_w, m_matrix, ScaleFunctional};
use cesbound::scores_fim::*;
use cesbound::{CesError, DensityGenerator, LowRankModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ScaleFunctional::*;

fn t8() -> DensityGenerator {
    DensityGenerator::student_t(8.0).unwrap()
}

/// `log p(x)` up to a constant, in `η = (μ, ovecs V, s)` coordinates.
fn log_pdf_eta(x: &DVector<f64>, eta: &DVector<f64>, kind: ScaleFunctional, gen: &DensityGenerator, m: usize) -> f64 {
    let p = half_len(m) - 1;
    let mu = eta.rows(0, m).into_owned();
    let v = complete_shape(kind, &eta.rows(m, p).into_owned(), m).unwrap();
    let sigma = v * eta[m + p];
    let q = linalg::quad_form(&(x - &mu), &spd_inverse(&sigma).unwrap());
    -0.5 * linalg::log_det_spd(&sigma).unwrap() + gen.log_g(q, m).unwrap()
}

fn eta_of(mu: &DVector<f64>, v: &DMatrix<f64>, s: f64) -> DVector<f64> {
    let ov = ovecs(v);
    let m = mu.len();
    let mut e = DVector::zeros(m + ov.len() + 1);
    e.rows_mut(0, m).copy_from(mu);
    e.rows_mut(m, ov.len()).copy_from(&ov);
    e[m + ov.len()] = s;
    e
}

/// `θ = (μ, vecs Σ)` as a linear parameterization.
fn identity_param(m: usize) -> Parameterization {
    let mut basis = Vec::new();
    for j in 0..m {
        for i in j..m {
            let mut b = DMatrix::zeros(m, m);
            b[(i, j)] = 1.0;
            b[(j, i)] = 1.0;
            basis.push(b);
        }
    }
    Parameterization::split_linear(DMatrix::identity(m, m), basis).unwrap()
}

fn identity_theta(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> DVector<f64> {
    let m = mu.len();
    let mut t = DVector::zeros(m + half_len(m));
    t.rows_mut(0, m).copy_from(mu);
    t.rows_mut(m, half_len(m)).copy_from(&vecs(sigma));
    t
}

/// A generic nonlinear parameterization with only finite-difference Jacobians.
fn nonlinear_param(m: usize, seed: u64) -> (Parameterization, DVector<f64>) {
    let mut rng = common::rng(seed);
    let base = common::random_spd(m, &mut rng);
    let dir = common::random_symmetric(m, &mut rng) * 0.2;
    let dir2 = common::random_symmetric(m, &mut rng) * 0.2;
    let loc = common::random_vector(m, &mut rng);
    let param = Parameterization::new(
        "nonlinear",
        m,
        4,
        2,
        Arc::new(move |t: &DVector<f64>| &loc * t[0].sin() + DVector::from_element(m, t[3])),
        Arc::new(move |t: &DVector<f64>| {
            let a = &base + &dir * t[1] + &dir2 * t[0].cos();
            &a * a.transpose() * t[2].exp()
        }),
    );
    (param, DVector::from_vec(vec![0.4, 0.3, -0.2, 0.1]))
}

fn low_rank(m: usize) -> (Parameterization, DVector<f64>) {
    let xi = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let model = LowRankModel::sinusoidal(m, DVector::from_vec(vec![0.4, 1.3]), xi, 0.5);
    (low_rank_parameterization(&model).unwrap(), model.theta0())
}

#[test]
fn gaussian_location_score_is_residual() {
    let mut rng = common::rng(1);
    let mu = common::random_vector(3, &mut rng);
    let x = common::random_vector(3, &mut rng);
    let sc = score_eta(&x, &mu, &DMatrix::identity(3, 3), 1.0, NormalizedTrace, &DensityGenerator::gaussian()).unwrap();
    assert!((sc.rows(0, 3).into_owned() - (&x - &mu)).amax() < 1e-14);
}

#[test]
fn score_eta_matches_log_density_gradient() {
    let mut rng = common::rng(2);
    let h = 1e-5;
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            for m in [2, 3] {
                let v = common::random_shape(kind, m, &mut rng);
                let s = 1.3;
                let mu = common::random_vector(m, &mut rng);
                let x = &mu + common::random_vector(m, &mut rng);
                let sc = score_eta(&x, &mu, &v, s, kind, &gen).unwrap();
                let eta = eta_of(&mu, &v, s);
                for k in 0..eta.len() {
                    let mut e = DVector::zeros(eta.len());
                    e[k] = h;
                    let fd = (log_pdf_eta(&x, &(&eta + &e), kind, &gen, m) - log_pdf_eta(&x, &(&eta - &e), kind, &gen, m))
                        / (2.0 * h);
                    assert!((fd - sc[k]).abs() < 1e-6 * sc[k].abs().max(1.0), "{} {kind} m={m} k={k}: {fd} vs {}", gen.name(), sc[k]);
                }
            }
        }
    }
}

#[test]
fn score_at_center_uses_limit() {
    let mu = DVector::from_vec(vec![0.5, -1.0]);
    let v = DMatrix::identity(2, 2);
    let gen = DensityGenerator::generalized_gaussian(0.5).unwrap();
    let sc = score_eta(&mu, &mu, &v, 1.0, NormalizedTrace, &gen).unwrap();
    assert!(sc.iter().all(|x| x.is_finite()));
    assert_eq!(sc.rows(0, 2).into_owned(), DVector::zeros(2));
    assert_eq!(sc[sc.len() - 1], -1.0);
}

#[test]
fn score_eta_has_zero_mean() {
    let m = 3;
    let n = 100_000;
    let mut rng = common::rng(3);
    for kind in ScaleFunctional::ALL {
        let gen = t8();
        let v = common::random_shape(kind, m, &mut rng);
        let s = 2.0;
        let mu = common::random_vector(m, &mut rng);
        let xs = common::draws(&gen, n, &mu, &(&v * s), 30 + kind as u64);
        let scores: Vec<_> = xs.iter().map(|x| score_eta(x, &mu, &v, s, kind, &gen).unwrap()).collect();
        let (mean, se) = common::mean_and_se(&scores);
        let z = common::bonferroni_z(mean.len());
        for k in 0..mean.len() {
            assert!(mean[k].abs() < z * se[k], "{kind} k={k}: {} +- {}", mean[k], se[k]);
        }
    }
}

#[test]
fn fim_eta_examples() {
    let g = DensityGenerator::gaussian();
    let f = fim_eta(&DVector::zeros(4), &DMatrix::identity(4, 4), 1.0, NormalizedTrace, &g, 4).unwrap();
    assert!((&f.i_mu - DMatrix::identity(4, 4)).amax() < 1e-14);
    assert!((f.i_s - 2.0).abs() < 1e-14);
    let mut rng = common::rng(4);
    for gen in common::generators() {
        let v = common::random_shape(DetRoot, 4, &mut rng);
        let f = fim_eta(&DVector::zeros(4), &v, 1.7, DetRoot, &gen, 4).unwrap();
        assert!(f.i_vs.amax() < 1e-12);
        let a = f.assemble();
        // cross blocks with the location are structurally zero
        assert!(a.view((0, 4), (4, a.ncols() - 4)).iter().all(|&x| x == 0.0));
    }
}

#[test]
fn fim_eta_is_positive_definite_for_non_detroot() {
    let mut rng = common::rng(5);
    for gen in common::generators() {
        for kind in [FirstElement, NormalizedTrace] {
            let v = common::random_shape(kind, 3, &mut rng);
            let a = fim_eta(&DVector::zeros(3), &v, 0.8, kind, &gen, 3).unwrap().assemble();
            assert!(linalg::relative_asymmetry(&a) < 1e-14);
            assert!(min_eigenvalue(&a) > 0.0);
        }
    }
}

#[test]
fn efficient_fim_shape_is_schur_complement() {
    let mut rng = common::rng(6);
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            for m in [2, 3, 4] {
                let v = common::random_shape(kind, m, &mut rng);
                let f = fim_eta(&DVector::zeros(m), &v, 1.0, kind, &gen, m).unwrap();
                let eff = efficient_fim_shape(&v, kind, &gen, m).unwrap();
                // the Schur complement computed from the assembled matrix, not from the blocks
                let a = f.assemble();
                let p = half_len(m) - 1;
                let vs = a.view((m, m), (p + 1, p + 1)).into_owned();
                let schur = efficient_fim_interest(&vs, p).unwrap();
                assert!(common::rel(&eff, &schur) < 1e-10, "{} {kind} m={m}", gen.name());
                if kind == DetRoot {
                    assert!(common::rel(&eff, &f.i_v) < 1e-12);
                }
            }
        }
    }
}

#[test]
fn efficient_fim_scales_with_alpha() {
    let mut rng = common::rng(7);
    let v = common::random_shape(FirstElement, 4, &mut rng);
    let g = efficient_fim_shape(&v, FirstElement, &DensityGenerator::gaussian(), 4).unwrap();
    for nu in [5.0, 8.0, 20.0] {
        let gen = DensityGenerator::student_t(nu).unwrap();
        let t = efficient_fim_shape(&v, FirstElement, &gen, 4).unwrap();
        let alpha = gen.coefficients(4).unwrap().alpha;
        assert!((t - &g * alpha).amax() < 1e-13 * g.amax());
    }
}

#[test]
fn projection_identity() {
    let mut rng = common::rng(8);
    for kind in ScaleFunctional::ALL {
        for gen in common::generators() {
            let m = 4;
            let v = common::random_shape(kind, m, &mut rng);
            let s = 2.5;
            let f = fim_eta(&DVector::zeros(m), &v, s, kind, &gen, m).unwrap();
            let lhs = &f.i_vs / f.i_s / (2.0 * s);
            let rhs = m_matrix(kind, &v).unwrap() * vec(&spd_inverse(&v).unwrap()) / (2.0 * m as f64);
            assert!((lhs - rhs).amax() < 1e-12, "{kind} {}", gen.name());
        }
    }
}

#[test]
fn fim_vecs_sigma_examples() {
    let d = duplication_matrix(2).unwrap();
    let f = fim_vecs_sigma(&DMatrix::identity(2, 2), &DensityGenerator::gaussian(), 2).unwrap();
    assert!((f - d.transpose() * &d * 0.5).amax() < 1e-15);
}

#[test]
fn fim_vecs_sigma_chain_rule() {
    let mut rng = common::rng(9);
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            let m = 3;
            let v = common::random_shape(kind, m, &mut rng);
            let s = 0.7;
            let j = jacobian_w(kind, &v, s).unwrap();
            let lhs = j.transpose() * fim_vecs_sigma(&(&v * s), &gen, m).unwrap() * &j;
            let a = fim_eta(&DVector::zeros(m), &v, s, kind, &gen, m).unwrap().assemble();
            let rhs = a.view((m, m), (half_len(m), half_len(m))).into_owned();
            assert!(common::rel(&lhs, &rhs) < 1e-10, "{} {kind}", gen.name());
        }
    }
}

fn check_empirical_fim(scores: &[DVector<f64>], analytic: &DMatrix<f64>, label: &str) {
    let (emp, se) = common::outer_product_stats(scores);
    let d = analytic.nrows();
    let z = common::max_z(&emp, analytic, &se);
    let thr = common::bonferroni_z(d * (d + 1) / 2);
    assert!(z < thr, "{label}: max z {z} > {thr}");
}

#[test]
fn empirical_fims_match_analytic() {
    let n = 20_000;
    let mut rng = common::rng(10);
    for gen in [DensityGenerator::gaussian(), t8()] {
        for m in [2, 4] {
            for kind in ScaleFunctional::ALL {
                let v = common::random_shape(kind, m, &mut rng);
                let s = 1.5;
                let mu = common::random_vector(m, &mut rng);
                let xs = common::draws(&gen, n, &mu, &(&v * s), 100 + m as u64);
                let scores: Vec<_> = xs.iter().map(|x| score_eta(x, &mu, &v, s, kind, &gen).unwrap()).collect();
                let f = fim_eta(&mu, &v, s, kind, &gen, m).unwrap().assemble();
                check_empirical_fim(&scores, &f, &format!("eta {} {kind} m={m}", gen.name()));
            }
            let sigma = common::random_spd(m, &mut rng);
            let mu = DVector::zeros(m);
            let xs = common::draws(&gen, n, &mu, &sigma, 200 + m as u64);
            let scores: Vec<_> = xs.iter().map(|x| score_vecs_sigma(x, &mu, &sigma, &gen).unwrap()).collect();
            check_empirical_fim(&scores, &fim_vecs_sigma(&sigma, &gen, m).unwrap(), &format!("vecs {} m={m}", gen.name()));
        }
    }
}

#[test]
fn fim_theta_identity_map_is_block_diagonal() {
    let mut rng = common::rng(11);
    for gen in common::generators() {
        let m = 3;
        let sigma = common::random_spd(m, &mut rng);
        let mu = common::random_vector(m, &mut rng);
        let f = fim_theta(&identity_param(m), &identity_theta(&mu, &sigma), &gen, m).unwrap();
        let beta = gen.coefficients(m).unwrap().beta;
        let mut expected = DMatrix::zeros(m + half_len(m), m + half_len(m));
        expected.view_mut((0, 0), (m, m)).copy_from(&(spd_inverse(&sigma).unwrap() * beta));
        expected.view_mut((m, m), (half_len(m), half_len(m))).copy_from(&fim_vecs_sigma(&sigma, &gen, m).unwrap());
        assert!(common::rel(&f, &expected) < 1e-12, "{}", gen.name());
    }
}

#[test]
fn fim_theta_shape_scale_reproduces_fim_eta() {
    let mut rng = common::rng(12);
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            let m = 3;
            let sigma = common::random_spd(m, &mut rng);
            let mu = common::random_vector(m, &mut rng);
            let param = Parameterization::shape_scale(kind, m).unwrap();
            let theta = Parameterization::shape_scale_theta(kind, &mu, &sigma).unwrap();
            let f = fim_theta(&param, &theta, &gen, m).unwrap();
            let d = scale_shape::decompose(kind, &sigma).unwrap();
            let expected = fim_eta(&mu, &d.v, d.s, kind, &gen, m).unwrap().assemble();
            assert!(common::rel(&f, &expected) < 1e-10, "{} {kind}", gen.name());
            // the finite-difference fallback agrees with the analytic Jacobians
            let f_fd = fim_theta(&param.clone().without_analytic_jacobians(), &theta, &gen, m).unwrap();
            assert!(common::rel(&f_fd, &f) < 1e-6);
        }
    }
}

#[test]
fn gaussian_fim_equals_semiparametric_fim() {
    let gen = DensityGenerator::gaussian();
    for (param, theta) in [low_rank(5), nonlinear_param(3, 13)] {
        let m = param.m;
        let f = fim_theta(&param, &theta, &gen, m).unwrap();
        let sf = sfim_theta(&param, &theta, &gen, m).unwrap();
        assert!((&f - &sf).amax() < 1e-12 * f.amax());
    }
}

#[test]
fn loewner_order_for_t() {
    for gen in [DensityGenerator::student_t(6.0).unwrap(), t8(), DensityGenerator::student_t(30.0).unwrap()] {
        for (param, theta) in [low_rank(4), nonlinear_param(3, 14), nonlinear_param(4, 15)] {
            let m = param.m;
            let diff = fim_theta(&param, &theta, &gen, m).unwrap() - sfim_theta(&param, &theta, &gen, m).unwrap();
            assert!(min_eigenvalue(&diff) >= -1e-10 * diff.amax().max(1.0), "{} {}", gen.name(), param.name);
            assert!(diff.trace() > 0.0);
        }
    }
}

#[test]
fn sfim_needs_finite_second_moment() {
    let (param, theta) = low_rank(4);
    let gen = DensityGenerator::student_t(3.5).unwrap();
    assert!(fim_theta(&param, &theta, &gen, 4).is_ok());
    assert!(matches!(sfim_theta(&param, &theta, &gen, 4), Err(CesError::MomentUndefined(_))));
}

#[test]
fn gaussian_efficient_score_equals_score() {
    let gen = DensityGenerator::gaussian();
    let (param, theta) = nonlinear_param(3, 16);
    let mu = param.mu(&theta);
    let sigma = param.sigma(&theta);
    for x in common::draws(&gen, 50, &mu, &sigma, 17) {
        let s = score_theta(&x, &param, &theta, &gen, 3).unwrap();
        let e = efficient_score_theta(&x, &param, &theta, &gen, 3).unwrap();
        assert!((s - e).amax() < 1e-12);
    }
}

#[test]
fn score_theta_matches_log_density_gradient() {
    let gen = t8();
    let (param, theta) = nonlinear_param(3, 18);
    let mut rng = common::rng(19);
    let x = common::random_vector(3, &mut rng);
    let logp = |t: &DVector<f64>| {
        let sigma = param.sigma(t);
        let q = linalg::quad_form(&(&x - param.mu(t)), &spd_inverse(&sigma).unwrap());
        -0.5 * linalg::log_det_spd(&sigma).unwrap() + gen.log_g(q, 3).unwrap()
    };
    let sc = score_theta(&x, &param, &theta, &gen, 3).unwrap();
    for k in 0..theta.len() {
        let mut e = DVector::zeros(theta.len());
        e[k] = 1e-5;
        let fd = (logp(&(&theta + &e)) - logp(&(&theta - &e))) / 2e-5;
        assert!((fd - sc[k]).abs() < 1e-5 * sc[k].abs().max(1.0));
    }
}

#[test]
fn efficient_score_statistics() {
    let n = 100_000;
    for gen in [t8(), DensityGenerator::generalized_gaussian(0.5).unwrap()] {
        let (param, theta) = low_rank(4);
        let m = 4;
        let mu = param.mu(&theta);
        let sigma = param.sigma(&theta);
        let sinv = spd_inverse(&sigma).unwrap();
        let xs = common::draws(&gen, n, &mu, &sigma, 20);
        let qs: Vec<f64> = xs.iter().map(|x| linalg::quad_form(&(x - &mu), &sinv)).collect();
        let eff: Vec<_> = xs.iter().map(|x| efficient_score_theta(x, &param, &theta, &gen, m).unwrap()).collect();
        let d = theta.len();

        let (mean, se) = common::mean_and_se(&eff);
        let z = common::bonferroni_z(d);
        for k in 0..d {
            assert!(mean[k].abs() < z * se[k], "{} mean k={k}", gen.name());
        }

        // covariance with (Q - m) equals tr(Σ⁻¹ Σ_k), the same as for the full score
        let jac = param.jacobian_vec_sigma(&theta);
        let prods: Vec<_> = eff.iter().zip(&qs).map(|(s, q)| s * (q - m as f64)).collect();
        let (mean, se) = common::mean_and_se(&prods);
        for k in 0..d {
            let tr = (&sinv * DMatrix::from_column_slice(m, m, jac.column(k).as_slice())).trace();
            assert!((mean[k] - tr).abs() < z * se[k], "{} cov(Q-m) k={k}: {} vs {tr}", gen.name(), mean[k]);
        }

        // orthogonal to functions of Q that are centred and residualized on Q - m
        let var_q = gen.sigma_q2(m).unwrap();
        let h_fns: [Box<dyn Fn(f64) -> f64>; 2] = [Box::new(|q: f64| q * q), Box::new(|q: f64| (1.0 + q).ln())];
        for h in h_fns.iter() {
            let eh = gen.expect(m, h);
            let cov = gen.expect(m, |q| h(q) * (q - m as f64));
            let prods: Vec<_> = eff
                .iter()
                .zip(&qs)
                .map(|(s, &q)| s * (h(q) - eh - cov / var_q * (q - m as f64)))
                .collect();
            let (mean, se) = common::mean_and_se(&prods);
            for k in 0..d {
                assert!(mean[k].abs() < z * se[k], "{} orth k={k}", gen.name());
            }
        }
    }
}

#[test]
fn efficient_score_covariance_matches_sfim() {
    let n = 20_000;
    let gen = t8();
    for (param, theta) in [low_rank(4), nonlinear_param(3, 21)] {
        let m = param.m;
        let xs = common::draws(&gen, n, &param.mu(&theta), &param.sigma(&theta), 22);
        let eff: Vec<_> = xs.iter().map(|x| efficient_score_theta(x, &param, &theta, &gen, m).unwrap()).collect();
        check_empirical_fim(&eff, &sfim_theta(&param, &theta, &gen, m).unwrap(), &param.name);
        let sc: Vec<_> = xs.iter().map(|x| score_theta(x, &param, &theta, &gen, m).unwrap()).collect();
        check_empirical_fim(&sc, &fim_theta(&param, &theta, &gen, m).unwrap(), &param.name);
    }
}

#[test]
fn rank_deficient_parameterization_is_rejected() {
    let m = 2;
    let param = Parameterization::new(
        "degenerate",
        m,
        2,
        1,
        Arc::new(move |_t: &DVector<f64>| DVector::zeros(m)),
        Arc::new(move |t: &DVector<f64>| DMatrix::identity(m, m) * (t[0] + t[1]).exp()),
    );
    let r = fim_theta(&param, &DVector::from_vec(vec![0.1, 0.2]), &t8(), m);
    assert!(matches!(r, Err(CesError::Identifiability(_))));
}

#[test]
fn efficient_fim_interest_examples() {
    let mut bd = DMatrix::zeros(3, 3);
    bd[(0, 0)] = 2.0;
    bd[(1, 1)] = 3.0;
    bd[(2, 2)] = 4.0;
    bd[(1, 2)] = 0.5;
    bd[(2, 1)] = 0.5;
    assert_eq!(efficient_fim_interest(&bd, 1).unwrap()[(0, 0)], 2.0);
    let f = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    assert!((efficient_fim_interest(&f, 1).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    let mut sing = DMatrix::identity(3, 3);
    sing[(2, 2)] = 0.0;
    assert!(efficient_fim_interest(&sing, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_schur_inverse_identity(seed in any::<u64>(), d in 2usize..8, q_frac in 0.1f64..0.9) {
        let mut rng = common::rng(seed);
        let f = common::random_spd(d, &mut rng);
        let q = ((d as f64 * q_frac) as usize).clamp(1, d - 1);
        let s = efficient_fim_interest(&f, q).unwrap();
        let top = spd_inverse(&f).unwrap().view((0, 0), (q, q)).into_owned();
        prop_assert!(common::rel_identity(&(s * top)) < 1e-10);
    }
}
