mod common;

use cdkf::linalg::cholesky_lower;
use cdkf::sigma_rules::{draw_sigma_matrix, make_5dckf_rule, make_ukf_rule, SigmaRule, UkfParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// All exponent vectors of length `n` with total degree at most `max_deg`.
fn monomials(n: usize, max_deg: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for d in 0..=left {
            cur[i] = d;
            rec(i + 1, left - d, cur, out);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    rec(0, max_deg, &mut vec![0; n], &mut out);
    out
}

/// `E[∏ xᵢ^aᵢ]` for `x ~ N(0, I)`: a product of `(a-1)!!` over even exponents.
fn gaussian_moment(alpha: &[usize]) -> f64 {
    alpha
        .iter()
        .map(|&a| {
            if a % 2 == 1 {
                0.0
            } else {
                (1..a).step_by(2).map(|k| k as f64).product::<f64>()
            }
        })
        .product()
}

fn rule_moment(rule: &SigmaRule, alpha: &[usize]) -> f64 {
    let g = rule.gammas();
    let w = rule.mean_weights();
    (0..rule.len())
        .map(|i| {
            let term: f64 = alpha
                .iter()
                .enumerate()
                .map(|(a, &p)| g[(a, i)].powi(p as i32))
                .product();
            w[i] * term
        })
        .sum()
}

fn assert_exact(rule: &SigmaRule, max_deg: usize) {
    for alpha in monomials(rule.dim(), max_deg) {
        let exact = gaussian_moment(&alpha);
        let got = rule_moment(rule, &alpha);
        assert!(
            (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
            "n = {}, exponents {alpha:?}: rule gives {got}, Gaussian moment {exact}",
            rule.dim()
        );
    }
}

#[test]
fn monomial_enumeration_counts() {
    // C(n + d, d) monomials of degree at most d.
    assert_eq!(monomials(2, 5).len(), 21);
    assert_eq!(monomials(7, 5).len(), 792);
    assert_eq!(gaussian_moment(&[4, 2]), 3.0);
    assert_eq!(gaussian_moment(&[6]), 15.0);
    assert_eq!(gaussian_moment(&[3, 2]), 0.0);
}

#[test]
fn cubature_integrates_every_quintic_monomial() {
    for n in 2..=8 {
        assert_exact(&make_5dckf_rule(n).unwrap(), 5);
    }
}

#[test]
fn cubature_is_not_exact_for_sextic() {
    let rule = make_5dckf_rule(3).unwrap();
    let misses = monomials(3, 6)
        .into_iter()
        .filter(|a| a.iter().sum::<usize>() == 6)
        .filter(|a| (rule_moment(&rule, a) - gaussian_moment(a)).abs() > 1e-6)
        .count();
    assert!(misses > 0);
}

#[test]
fn unscented_rule_integrates_every_cubic_monomial() {
    for n in 2..=8 {
        assert_exact(&make_ukf_rule(n, UkfParams::classical(n)).unwrap(), 3);
    }
}

#[test]
fn weights_sum_to_one_and_points_are_centred() {
    for n in 2..=8 {
        for rule in [
            make_5dckf_rule(n).unwrap(),
            make_ukf_rule(n, UkfParams::classical(n)).unwrap(),
        ] {
            let w = rule.mean_weights();
            assert!((w.sum() - 1.0).abs() < 1e-13);
            let centre = rule.gammas() * w;
            assert!(centre.amax() < 1e-13);
        }
    }
}

fn explicit_weighted_cov(rule: &SigmaRule, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let w = rule.mean_weights();
    let wc = rule.cov_weights();
    let a_mean = a * w;
    let b_mean = b * w;
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    for i in 0..rule.len() {
        let da = a.column(i) - &a_mean;
        let db = b.column(i) - &b_mean;
        out += wc[i] * &da * db.transpose();
    }
    out
}

fn rule_for(n: usize, cubature: bool) -> SigmaRule {
    if cubature {
        make_5dckf_rule(n).unwrap()
    } else {
        make_ukf_rule(n, UkfParams::classical(n)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_quintic_polynomials_are_integrated_exactly(
        n in 2usize..=8,
        seed in any::<u64>(),
    ) {
        let rule = make_5dckf_rule(n).unwrap();
        let mut rng = common::rng(seed);
        let coeffs = common::gaussian_vector(&mut rng, monomials(n, 5).len());
        let mut exact = 0.0;
        let mut got = 0.0;
        let mut scale = 0.0;
        for (c, alpha) in coeffs.iter().zip(monomials(n, 5)) {
            let m = gaussian_moment(&alpha);
            exact += c * m;
            got += c * rule_moment(&rule, &alpha);
            scale += (c * m).abs();
        }
        prop_assert!((got - exact).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn sigma_points_reproduce_covariance(
        n in 2usize..=8,
        cubature in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let rule = rule_for(n, cubature);
        let mut rng = common::rng(seed);
        let p = common::random_spd(&mut rng, n, 0.5);
        let mean = common::gaussian_vector(&mut rng, n);
        let x = draw_sigma_matrix(&mean, &cholesky_lower(&p).unwrap(), &rule).unwrap();
        prop_assert!(common::rel_diff(&explicit_weighted_cov(&rule, &x, &x), &p) < 1e-12);
        prop_assert!((rule.weighted_mean(&x) - &mean).amax() < 1e-12 * (1.0 + mean.amax()));
    }

    #[test]
    fn factored_weight_matrix_matches_explicit_sums(
        n in 2usize..=8,
        m in 1usize..=3,
        cubature in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let rule = rule_for(n, cubature);
        let mut rng = common::rng(seed);
        let x = common::gaussian_matrix(&mut rng, n, rule.len());
        let z = common::gaussian_matrix(&mut rng, m, rule.len());

        let explicit_zz = explicit_weighted_cov(&rule, &z, &z);
        let explicit_xz = explicit_weighted_cov(&rule, &x, &z);
        let tol = 1e-12 * (1.0 + explicit_zz.norm());
        prop_assert!((rule.cross_moment(&z, &z) - &explicit_zz).norm() < tol);
        prop_assert!((rule.cross_moment(&x, &z) - &explicit_xz).norm() < 1e-12 * (1.0 + explicit_xz.norm()));

        let d = rule.weighted_deviations(&z);
        let j = rule.signature().to_matrix();
        prop_assert!((&d * j * d.transpose() - &explicit_zz).norm() < tol);
        let zw: DVector<f64> = &z * rule.mean_weights();
        prop_assert!((rule.weighted_mean(&z) - zw).amax() < 1e-14 * (1.0 + z.amax()));
    }
}
