mod common;

use cesbound::linalg;
use cesbound::matcalc::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn vec_examples() {
    assert_eq!(vec(&DMatrix::identity(2, 2)), DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]));
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(vec(&a), DVector::from_vec(vec![1.0, 3.0, 2.0, 4.0]));
}

#[test]
fn vec_transpose_matches_commutation() {
    let mut rng = common::rng(1);
    let a = common::random_matrix(3, 3, &mut rng);
    let k = commutation_matrix(3).unwrap();
    assert_eq!(vec(&a.transpose()), &k * vec(&a));
}

#[test]
fn duplication_examples() {
    assert_eq!(duplication_matrix(1).unwrap(), DMatrix::from_element(1, 1, 1.0));
    let d2 = duplication_matrix(2).unwrap();
    let expected = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.]);
    assert_eq!(d2, expected);
    assert!(duplication_matrix(0).is_err());
}

#[test]
fn duplication_identity_m4() {
    let mut rng = common::rng(2);
    let d = duplication_matrix(4).unwrap();
    assert!(d.iter().all(|&x| x == 0.0 || x == 1.0));
    for _ in 0..100 {
        let a = common::random_symmetric(4, &mut rng);
        assert_eq!(&d * vecs(&a), vec(&a));
    }
}

#[test]
fn commutation_examples() {
    assert_eq!(commutation_matrix(1).unwrap(), DMatrix::from_element(1, 1, 1.0));
    let k2 = commutation_matrix(2).unwrap();
    let mut p = DMatrix::<f64>::identity(4, 4);
    p.swap_rows(1, 2);
    assert_eq!(k2, p);
    let k3 = commutation_matrix(3).unwrap();
    let d3 = duplication_matrix(3).unwrap();
    assert_eq!(&k3 * &d3, d3);
    assert_eq!(&k3 * &k3, DMatrix::identity(9, 9));
}

#[test]
fn dup_pinv_identities() {
    assert_eq!(dup_pinv(1).unwrap(), DMatrix::from_element(1, 1, 1.0));
    for m in 1..=6 {
        let d = duplication_matrix(m).unwrap();
        let dp = dup_pinv(m).unwrap();
        let k = commutation_matrix(m).unwrap();
        let n = half_len(m);
        assert!((&dp * &d - DMatrix::identity(n, n)).amax() < 1e-12);
        let half = (DMatrix::identity(m * m, m * m) + &k) * 0.5;
        assert!((&d * &dp - half).amax() < 1e-12);
        assert!((&dp * &k - &dp).amax() < 1e-12);
        // closed form agrees with the SVD pseudo-inverse
        let svd_pinv = d.clone().pseudo_inverse(1e-12).unwrap();
        assert!((&dp - svd_pinv).amax() < 1e-12);
    }
}

#[test]
fn row_selector_examples() {
    assert_eq!(row_selector(2).unwrap(), DMatrix::from_row_slice(2, 3, &[0., 1., 0., 0., 0., 1.]));
    assert!(row_selector(1).is_err());
    let mut rng = common::rng(3);
    let a = common::random_symmetric(3, &mut rng);
    let sel = row_selector(3).unwrap();
    assert_eq!(&sel * vecs(&a), ovecs(&a));
    assert_eq!(&sel * sel.transpose(), DMatrix::identity(5, 5));
}

#[test]
fn duplication_full_column_rank() {
    for m in 1..=6 {
        assert_eq!(linalg::rank(&duplication_matrix(m).unwrap(), 1e-10), half_len(m));
    }
}

#[test]
fn symmetrizer_projects_onto_symmetric() {
    let mut rng = common::rng(4);
    for m in 2..=5 {
        let k = commutation_matrix(m).unwrap();
        let a = common::random_matrix(m, m, &mut rng);
        let p = (DMatrix::identity(m * m, m * m) + k) * 0.5;
        assert!((p * vec(&a) - vec(&((&a + a.transpose()) * 0.5))).amax() < 1e-14);
    }
}

#[test]
fn vecs_index_matches_layout() {
    for m in 1..=5 {
        let a = DMatrix::from_fn(m, m, |i, j| (10 * i.max(j) + i.min(j)) as f64);
        let v = vecs(&a);
        for j in 0..m {
            for i in j..m {
                assert_eq!(v[vecs_index(m, i, j)], a[(i, j)]);
                assert_eq!(vecs_index(m, i, j), vecs_index(m, j, i));
            }
        }
    }
}

#[test]
fn vechalf_round_trip() {
    let mut rng = common::rng(5);
    let a = common::random_symmetric(4, &mut rng);
    let h = VecHalf::vecs(&a);
    assert_eq!(h.data[0], a[(0, 0)]);
    assert_eq!(h.data.rows(1, 9).into_owned(), ovecs(&a));
    assert_eq!(h.to_matrix(None).unwrap(), a);
    assert_eq!(h.to_ovecs().to_matrix(Some(a[(0, 0)])).unwrap(), a);
    assert!(h.to_ovecs().to_matrix(None).is_err());
    assert_eq!(dim_from_half_len(10).unwrap(), 4);
    assert!(dim_from_half_len(7).is_err());
}

fn sym_strategy(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-10.0..10.0f64, half_len(m)).prop_map(move |v| unvecs(&DVector::from_vec(v), m).unwrap())
}

proptest! {
    #[test]
    fn prop_vecs_round_trip(m in 1usize..7, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let a = common::random_symmetric(m, &mut rng);
        prop_assert_eq!(unvecs(&vecs(&a), m).unwrap(), a.clone());
        prop_assert_eq!(unvec(&vec(&a), m).unwrap(), a);
    }

    #[test]
    fn prop_half_quadratic_forms_agree(a in sym_strategy(3), b in sym_strategy(3)) {
        let d = duplication_matrix(3).unwrap();
        let bb = linalg::kron(&b, &b);
        let lhs = vecs(&a).dot(&(d.transpose() * &bb * &d * vecs(&a)));
        let rhs = vec(&a).dot(&(&bb * vec(&a)));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn prop_duplication_identity(a in sym_strategy(4)) {
        let d = duplication_matrix(4).unwrap();
        prop_assert_eq!(d * vecs(&a), vec(&a));
    }
}
