mod common;

use cesbound::bounds::*;
use cesbound::linalg::{self, max_eigenvalue, min_eigenvalue, rank, spd_inverse};
use cesbound::matcalc::{dup_pinv, duplication_matrix, half_len};
use cesbound::scale_shape::{self, k_matrix, ScaleFunctional};
use cesbound::scores_fim::{efficient_fim_shape, fim_eta, fim_vecs_sigma};
use cesbound::DensityGenerator;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ScaleFunctional::*;

#[test]
fn crb_location_examples() {
    let g = DensityGenerator::gaussian();
    assert_eq!(crb_location(&DMatrix::identity(3, 3), 1.0, &g, 3).unwrap(), DMatrix::identity(3, 3));
    let mut rng = common::rng(1);
    for gen in common::generators() {
        let v = common::random_shape(NormalizedTrace, 4, &mut rng);
        let s = 1.9;
        let c = crb_location(&v, s, &gen, 4).unwrap();
        let f = fim_eta(&DVector::zeros(4), &v, s, NormalizedTrace, &gen, 4).unwrap();
        assert!(common::rel_identity(&(c * f.i_mu)) < 1e-12);
    }
    let t6 = DensityGenerator::student_t(6.0).unwrap();
    let beta = t6.coefficients_by_quadrature(4).beta;
    let c = crb_location(&DMatrix::identity(4, 4), 1.0, &t6, 4).unwrap();
    assert!((c[(0, 0)] * beta - 1.0).abs() < 1e-8);
}

#[test]
fn crb_shape_inverts_efficient_fim() {
    let mut rng = common::rng(2);
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            for m in [2, 3, 4] {
                let v = common::random_shape(kind, m, &mut rng);
                let b = crb_shape(kind, &v, &gen, m).unwrap();
                let f = efficient_fim_shape(&v, kind, &gen, m).unwrap();
                assert!(common::rel_identity(&(&b * &f)) < 1e-8, "{} {kind} m={m}", gen.name());
                assert!(linalg::relative_asymmetry(&b) < 1e-14);
                assert!(min_eigenvalue(&b) > 0.0);
            }
        }
    }
}

#[test]
fn detroot_closed_forms_agree() {
    let mut rng = common::rng(3);
    for gen in common::generators() {
        for m in [2, 3, 4] {
            let v = common::random_shape(DetRoot, m, &mut rng);
            let general = crb_shape(DetRoot, &v, &gen, m).unwrap();
            let special = crb_shape_detroot(&v, &gen, m).unwrap();
            assert!(common::rel(&special, &general) < 1e-12);
            let s = 2.2;
            let sigma = &v * s;
            let (value, psi) = crb_scale(DetRoot, &v, &sigma, &gen, m).unwrap();
            assert!(psi.norm() < 1e-12, "{}", psi.norm());
            let closed = crb_scale_detroot(&sigma, &gen, m).unwrap();
            assert!((value - closed).abs() < 1e-12 * closed);
        }
    }
}

#[test]
fn crb_scale_gaussian_detroot_example() {
    let g = DensityGenerator::gaussian();
    let i2 = DMatrix::identity(2, 2);
    assert!((crb_scale_detroot(&i2, &g, 2).unwrap() - 1.0).abs() < 1e-15);
    assert!((crb_scale(DetRoot, &i2, &i2, &g, 2).unwrap().0 - 1.0).abs() < 1e-14);
}

#[test]
fn gaussian_over_t_ratio() {
    let mut rng = common::rng(4);
    let v = common::random_shape(NormalizedTrace, 3, &mut rng);
    let bg = crb_shape(NormalizedTrace, &v, &DensityGenerator::gaussian(), 3).unwrap();
    let t = DensityGenerator::student_t(7.0).unwrap();
    let bt = crb_shape(NormalizedTrace, &v, &t, 3).unwrap();
    let alpha = t.coefficients(3).unwrap().alpha;
    assert!((bt * alpha - bg).amax() < 1e-13);
}

#[test]
fn assembled_bounds_invert_assembled_fim() {
    let mut rng = common::rng(5);
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            for m in [2, 3, 4] {
                let sigma = common::random_spd(m, &mut rng) * 1.7;
                let bs = bound_set(kind, &sigma, &gen).unwrap();
                let d = scale_shape::decompose(kind, &sigma).unwrap();
                let f = fim_eta(&DVector::zeros(m), &d.v, d.s, kind, &gen, m).unwrap().assemble();
                let b = bs.assemble_eta();
                assert!(common::rel_identity(&(&b * &f)) < 1e-8, "{} {kind} m={m}", gen.name());
                // independent route: numerical inverse of the assembled FIM
                let inv = spd_inverse(&f).unwrap();
                assert!(common::rel(&b, &inv) < 1e-8);
                assert!(min_eigenvalue(&b) > 0.0);
            }
        }
    }
}

#[test]
fn crb_vecs_sigma_examples() {
    let g = DensityGenerator::gaussian();
    let dp = dup_pinv(2).unwrap();
    let b = crb_vecs_sigma(&DMatrix::identity(2, 2), &g, 2).unwrap();
    assert!((b - &dp * dp.transpose() * 2.0).amax() < 1e-15);
}

#[test]
fn crb_vecs_sigma_inverts_fim() {
    let mut rng = common::rng(6);
    for gen in common::generators() {
        for m in [2, 3, 4] {
            let sigma = common::random_spd(m, &mut rng);
            let b = crb_vecs_sigma(&sigma, &gen, m).unwrap();
            let f = fim_vecs_sigma(&sigma, &gen, m).unwrap();
            assert!(common::rel_identity(&(b * f)) < 1e-8);
        }
    }
    for trial in 0..50 {
        let gen = DensityGenerator::student_t(8.0).unwrap();
        let m = 2 + trial % 3;
        let sigma = common::random_spd(m, &mut rng);
        let b = crb_vecs_sigma(&sigma, &gen, m).unwrap();
        assert!(linalg::relative_asymmetry(&b) < 1e-14);
        assert!(min_eigenvalue(&b) > 0.0);
    }
}

#[test]
fn known_scale_gap_is_rank_one_psd() {
    let mut rng = common::rng(7);
    for gen in common::generators() {
        for kind in ScaleFunctional::ALL {
            for m in [2, 3, 4] {
                let v = common::random_shape(kind, m, &mut rng);
                let b = crb_shape(kind, &v, &gen, m).unwrap();
                let nn = no_nuisance_crb_shape(kind, &v, &gen, m).unwrap();
                let gap = &b - &nn;
                let scale = b.norm();
                if kind == DetRoot {
                    assert!(gap.norm() < 1e-10 * scale);
                } else {
                    assert!(min_eigenvalue(&gap) >= -1e-10 * scale);
                    assert!(max_eigenvalue(&gap) > 1e-6 * scale);
                    assert_eq!(rank(&gap, 1e-8 * scale), 1, "{} {kind} m={m}", gen.name());
                }
            }
        }
    }
}

#[test]
fn chain_report() {
    let mut rng = common::rng(8);
    let gens = common::generators();
    for kind in ScaleFunctional::ALL {
        for m in [2, 3, 4] {
            let v = common::random_shape(kind, m, &mut rng);
            let rep = verify_chain(kind, &v, &gens, m).unwrap();
            assert!(rep.passed, "{kind} m={m}: {rep:?}");
            assert_eq!(rep.generators.len(), gens.len());
            for g in &rep.generators {
                assert_eq!(g.links.len(), 3);
                let last = &g.links[2];
                assert_eq!(last.expected_equal, kind == DetRoot);
                if kind == DetRoot {
                    assert!(last.rel_error < CHAIN_EQUALITY_TOL);
                } else {
                    assert!(g.no_nuisance_trace < g.shape_bound_trace);
                }
            }
        }
    }
    let v = DMatrix::identity(3, 3);
    let rep = verify_chain(FirstElement, &v, &[DensityGenerator::gaussian()], 3).unwrap();
    assert!(rep.passed);
}

fn random_orthogonal(m: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    common::random_matrix(m, m, rng).qr().q()
}

/// Bound on `E‖V̂ - V‖²_F`, obtained by lifting the `ovecs` bound to `vec V`.
fn frobenius_mse_bound(kind: ScaleFunctional, v: &DMatrix<f64>, gen: &DensityGenerator) -> f64 {
    let m = v.nrows();
    let b = crb_shape(kind, v, gen, m).unwrap();
    let lift = duplication_matrix(m).unwrap() * k_matrix(kind, v).unwrap();
    (&lift * b * lift.transpose()).trace()
}

#[test]
fn frobenius_bound_invariant_under_rotation() {
    let mut rng = common::rng(9);
    for gen in common::generators() {
        for kind in [NormalizedTrace, DetRoot] {
            let m = 4;
            let v = common::random_shape(kind, m, &mut rng);
            let o = random_orthogonal(m, &mut rng);
            let w = scale_shape::renormalize(kind, &(&o * &v * o.transpose())).unwrap();
            let t1 = frobenius_mse_bound(kind, &v, &gen);
            let t2 = frobenius_mse_bound(kind, &w, &gen);
            assert!((t1 - t2).abs() < 1e-10 * t1, "{} {kind}: {t1} vs {t2}", gen.name());
        }
    }
}

#[test]
fn ovecs_trace_is_basis_dependent() {
    // dropping [V]11 and counting off-diagonal entries once is not rotation invariant
    let mut rng = common::rng(10);
    let gen = DensityGenerator::gaussian();
    let v = common::random_shape(NormalizedTrace, 4, &mut rng);
    let o = random_orthogonal(4, &mut rng);
    let w = scale_shape::renormalize(NormalizedTrace, &(&o * &v * o.transpose())).unwrap();
    let t1 = crb_shape(NormalizedTrace, &v, &gen, 4).unwrap().trace();
    let t2 = crb_shape(NormalizedTrace, &w, &gen, 4).unwrap().trace();
    assert!((t1 - t2).abs() > 1e-3 * t1);
}

#[test]
fn bound_set_shapes_and_layout() {
    let sigma = linalg::toeplitz(4, 0.8);
    let bs = bound_set(FirstElement, &sigma, &DensityGenerator::student_t(6.0).unwrap()).unwrap();
    assert_eq!(bs.crb_mu.shape(), (4, 4));
    assert_eq!(bs.crb_shape.shape(), (half_len(4) - 1, half_len(4) - 1));
    assert_eq!(bs.psi_cross.len(), half_len(4) - 1);
    assert_eq!(bs.crb_vecs_sigma.shape(), (half_len(4), half_len(4)));
    assert!(bs.crb_scale > 0.0);
    let det = bound_set(DetRoot, &sigma, &DensityGenerator::gaussian()).unwrap();
    assert!(det.psi_cross.norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prop_shape_bound_inverse(seed in any::<u64>(), m in 2usize..5, nu in 4.5f64..40.0, k in 0usize..3) {
        let kind = ScaleFunctional::ALL[k];
        let mut rng = common::rng(seed);
        let v = common::random_shape(kind, m, &mut rng);
        let gen = DensityGenerator::student_t(nu).unwrap();
        let b = crb_shape(kind, &v, &gen, m).unwrap();
        let f = efficient_fim_shape(&v, kind, &gen, m).unwrap();
        prop_assert!(common::rel_identity(&(b * f)) < 1e-8);
    }

    #[test]
    fn prop_scale_bound_from_inverse(seed in any::<u64>(), m in 2usize..5, k in 0usize..3) {
        let kind = ScaleFunctional::ALL[k];
        let mut rng = common::rng(seed);
        let sigma = common::random_spd(m, &mut rng);
        let gen = DensityGenerator::generalized_gaussian(0.7).unwrap();
        let d = scale_shape::decompose(kind, &sigma).unwrap();
        let (value, psi) = crb_scale(kind, &d.v, &sigma, &gen, m).unwrap();
        let inv = spd_inverse(&fim_eta(&DVector::zeros(m), &d.v, d.s, kind, &gen, m).unwrap().assemble()).unwrap();
        let n = inv.nrows();
        prop_assert!((inv[(n - 1, n - 1)] - value).abs() < 1e-8 * value);
        let p = psi.len();
        prop_assert!((inv.view((m, n - 1), (p, 1)).into_owned().column(0) - &psi).amax() < 1e-8 * inv.amax());
    }
}
