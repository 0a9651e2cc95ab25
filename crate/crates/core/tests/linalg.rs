mod common;

use cdkf::linalg::{
    cholesky_lower, hyperbolic_block_triangularize, phi_map, trisolve, LowerTriangular, Side, Sign,
    Signature,
};
use cdkf::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

/// `[A | B]` with `A Aᵀ - B Bᵀ` positive definite. `A` (Gaussian plus
/// `3·I` on its leading block) is redrawn until `λ_min(A Aᵀ) > 1e-2 ‖A Aᵀ‖`;
/// `B` is then shrunk until the difference clears `1e-3 ‖A Aᵀ‖`.
fn indefinite_pair(rng: &mut impl Rng, s: usize, p: usize, q: usize) -> (DMatrix<f64>, Signature) {
    let (a, aat) = loop {
        let mut a = common::gaussian_matrix(rng, s, p);
        for i in 0..s {
            a[(i, i)] += 3.0;
        }
        let aat = &a * a.transpose();
        if aat.symmetric_eigenvalues().min() > 1e-2 * aat.norm() {
            break (a, aat);
        }
    };
    let mut b = common::gaussian_matrix(rng, s, q) * 3.0;
    while (&aat - &b * b.transpose()).symmetric_eigenvalues().min() <= 1e-3 * aat.norm() {
        b *= 0.8;
    }
    let mut pre = DMatrix::zeros(s, p + q);
    pre.view_mut((0, 0), (s, p)).copy_from(&a);
    pre.view_mut((0, p), (s, q)).copy_from(&b);
    let j = Signature::all_positive(p).concat(&Signature::new(vec![Sign::Minus; q]));
    (pre, j)
}

fn check_post_array(pre: &DMatrix<f64>, j: &Signature) {
    let s = pre.nrows();
    let qr = hyperbolic_block_triangularize(pre, j).unwrap();
    let post = qr.post_array();
    let jm = j.to_matrix();
    let scale = pre.norm_squared();
    let residual = (post * &jm * post.transpose() - pre * &jm * pre.transpose()).norm();
    assert!(residual <= 1e-10 * scale, "J-Gram residual {residual:e}, scale {scale:e}");

    let lead = post.view((0, 0), (s, s));
    for r in 0..s {
        assert!(lead[(r, r)] > 0.0);
        for c in r + 1..s {
            assert_eq!(lead[(r, c)], 0.0);
        }
    }
    let tail = post.columns(s, post.ncols() - s).norm();
    assert!(tail <= 1e-10 * pre.norm());

    let l = qr.factor();
    let target = pre * &jm * pre.transpose();
    assert!((l.gram() - &target).norm() <= 1e-10 * scale);
}

#[test]
fn thousand_random_indefinite_pairs() {
    let mut rng = common::rng(20240611);
    for _ in 0..1000 {
        let s = rng.random_range(1..=7);
        let p = s + rng.random_range(0..=4);
        let q = rng.random_range(1..=5);
        let (pre, j) = indefinite_pair(&mut rng, s, p, q);
        check_post_array(&pre, &j);
    }
}

/// Lower Cholesky factor of `pre preᵀ` from an ordinary Householder QR of
/// `preᵀ`, with column signs fixed so the diagonal is positive.
fn orthogonal_qr_factor(pre: &DMatrix<f64>) -> DMatrix<f64> {
    let r = pre.transpose().qr().r();
    let mut l = r.transpose();
    for c in 0..l.ncols() {
        if l[(c, c)] < 0.0 {
            l.column_mut(c).neg_mut();
        }
    }
    l
}

#[test]
fn all_positive_signature_matches_orthogonal_qr() {
    let mut rng = common::rng(7);
    for _ in 0..200 {
        let s = rng.random_range(1..=7);
        let t = s + rng.random_range(0..=6);
        let pre = common::gaussian_matrix(&mut rng, s, t);
        let j = Signature::all_positive(t);
        let l = hyperbolic_block_triangularize(&pre, &j).unwrap().factor();
        let reference = orthogonal_qr_factor(&pre);
        assert!((l.as_matrix() - &reference).norm() <= 1e-10 * pre.norm());
    }
}

#[test]
fn negative_column_anywhere_in_the_signature() {
    // Signature order should not matter to the Gram identity.
    let mut rng = common::rng(11);
    let (pre, j) = indefinite_pair(&mut rng, 3, 4, 2);
    let perm = [4, 0, 1, 5, 2, 3];
    let pre_p = DMatrix::from_fn(3, 6, |r, c| pre[(r, perm[c])]);
    let j_p = Signature::new(perm.iter().map(|&c| j.signs()[c]).collect());
    let a = hyperbolic_block_triangularize(&pre, &j).unwrap().factor();
    let b = hyperbolic_block_triangularize(&pre_p, &j_p).unwrap().factor();
    assert!((a.as_matrix() - b.as_matrix()).norm() < 1e-12 * pre.norm_squared());
}

#[test]
fn indefinite_target_breaks_down() {
    let pre = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.5]);
    let j = Signature::new(vec![Sign::Plus, Sign::Plus, Sign::Minus, Sign::Minus]);
    assert!(matches!(
        hyperbolic_block_triangularize(&pre, &j),
        Err(Error::HyperbolicBreakdown { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cholesky_reconstructs(n in 1usize..=9, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let m = common::random_spd(&mut rng, n, 1e-3);
        let l = cholesky_lower(&m).unwrap();
        prop_assert!(l.has_positive_diagonal());
        prop_assert!((l.gram() - &m).norm() <= 1e-12 * m.norm());
    }

    #[test]
    fn trisolve_residuals(n in 1usize..=8, k in 1usize..=4, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let mut raw = common::gaussian_matrix(&mut rng, n, n);
        for i in 0..n {
            raw[(i, i)] = 1.0 + raw[(i, i)].abs();
        }
        let l = LowerTriangular::from_lower_part(raw);
        let lm = l.as_matrix().clone();
        let b = common::gaussian_matrix(&mut rng, n, k);
        let bt = b.transpose();
        let cases = [
            (&lm * trisolve(&l, &b, Side::Left, false).unwrap(), &b),
            (lm.transpose() * trisolve(&l, &b, Side::Left, true).unwrap(), &b),
            (trisolve(&l, &bt, Side::Right, false).unwrap() * &lm, &bt),
            (trisolve(&l, &bt, Side::Right, true).unwrap() * lm.transpose(), &bt),
        ];
        for (got, want) in cases {
            prop_assert!((got - want).norm() < 1e-12 * want.norm() * lm.norm() / lm.diagonal().min());
        }
    }

    #[test]
    fn phi_map_is_linear_and_splits_symmetric_input(
        n in 1usize..=7,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let m = common::gaussian_matrix(&mut rng, n, n);
        let k = common::gaussian_matrix(&mut rng, n, n);
        let lhs = phi_map(&(&m * a + &k * b));
        let rhs = phi_map(&m) * a + phi_map(&k) * b;
        prop_assert!((lhs - rhs).amax() < 1e-14 * (1.0 + m.amax() + k.amax()) * 8.0);
        let sym = &m + m.transpose();
        let split = phi_map(&sym);
        prop_assert!((&split + split.transpose() - &sym).amax() == 0.0);
    }

    #[test]
    fn hyperbolic_gram_property(
        s in 1usize..=6,
        extra in 0usize..=3,
        q in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let (pre, j) = indefinite_pair(&mut rng, s, s + extra, q);
        check_post_array(&pre, &j);
    }
}
