//! Sigma-point and cubature rules in matrix-vector form.
//!
//! A [`SigmaRule`] stores unit-covariance generator vectors `Γ` together with
//! mean weights `w`, covariance weights `w_c`, and the factorization
//! `W = |W|^{1/2} · diag(S) · |W|^{ᵀ/2}` of the covariance weight matrix
//! `W = (I - w 1ᵀ) diag(w_c) (I - w 1ᵀ)ᵀ`. Negative covariance weights are
//! always moved to the trailing positions when the rule is built, so the
//! signature `S` has the `diag(I, -I)` shape the hyperbolic QR expects.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Ukf,
    FifthDegreeCubature,
}

/// Scaling parameters of the unscented transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UkfParams {
    /// α = 1, β = 0, κ = 3 - n.
    pub fn classical(n: usize) -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            kappa: 3.0 - n as f64,
        }
    }

    pub fn lambda(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha * self.alpha * (self.kappa + n) - n
    }
}

#[derive(Debug, Clone)]
pub struct SigmaRule {
    kind: RuleKind,
    gammas: DMatrix<f64>,
    w: DVector<f64>,
    wc: DVector<f64>,
    sqrt_w_abs: DMatrix<f64>,
    signature: Signature,
}

impl SigmaRule {
    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.gammas.nrows()
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        self.gammas.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Generator vectors `Γ`, one per column.
    pub fn gammas(&self) -> &DMatrix<f64> {
        &self.gammas
    }

    pub fn mean_weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn cov_weights(&self) -> &DVector<f64> {
        &self.wc
    }

    /// `|W|^{1/2}`, an `N × N` matrix.
    pub fn sqrt_w_abs(&self) -> &DMatrix<f64> {
        &self.sqrt_w_abs
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    /// The covariance weight matrix `W` formed explicitly.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        centering(&self.w) * DMatrix::from_diagonal(&self.wc) * centering(&self.w).transpose()
    }

    /// `M · |W|^{1/2}` for a matrix whose columns correspond to the points.
    pub fn weighted_deviations(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m * &self.sqrt_w_abs
    }

    /// `M · w`.
    pub fn weighted_mean(&self, m: &DMatrix<f64>) -> DVector<f64> {
        m * &self.w
    }

    /// `A W Bᵀ` evaluated through the factored form.
    pub fn cross_moment(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let da = self.weighted_deviations(a);
        let mut db = self.weighted_deviations(b);
        for (c, s) in self.signature.signs().iter().enumerate() {
            if s.value() < 0.0 {
                db.column_mut(c).neg_mut();
            }
        }
        da * db.transpose()
    }

    /// Jointly reorders points so that negative covariance weights trail.
    fn with_trailing_negatives(
        kind: RuleKind,
        gammas: DMatrix<f64>,
        w: DVector<f64>,
        wc: DVector<f64>,
    ) -> Self {
        let n_pts = w.len();
        let mut order: Vec<usize> = (0..n_pts).filter(|&i| wc[i] >= 0.0).collect();
        order.extend((0..n_pts).filter(|&i| wc[i] < 0.0));
        let gammas = gammas.select_columns(order.iter());
        let w = DVector::from_iterator(n_pts, order.iter().map(|&i| w[i]));
        let wc = DVector::from_iterator(n_pts, order.iter().map(|&i| wc[i]));
        let (sqrt_w_abs, signature) = build_weight_factor(&w, &wc);
        Self {
            kind,
            gammas,
            w,
            wc,
            sqrt_w_abs,
            signature,
        }
    }
}

/// `I - w 1ᵀ` (every column of the subtracted part equals `w`).
fn centering(w: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - w[i])
}

/// `|W|^{1/2} = (I - w 1ᵀ) diag(√|w_c|)` and `S = diag(sgn w_c)`.
pub fn build_weight_factor(w: &DVector<f64>, wc: &DVector<f64>) -> (DMatrix<f64>, Signature) {
    assert_eq!(w.len(), wc.len(), "weight vectors differ in length");
    let root = DVector::from_iterator(wc.len(), wc.iter().map(|x| x.abs().sqrt()));
    let sqrt_w_abs = centering(w) * DMatrix::from_diagonal(&root);
    (sqrt_w_abs, Signature::from_weights(wc.as_slice()))
}

/// Fifth-degree spherical-radial cubature rule with `2n² + 1` points.
///
/// Point order: centre, the `(e_k + e_l)/√2` family (all `+` then all `-`),
/// the `(e_k - e_l)/√2` family (same), then the `2n` axis points. Each
/// off-axis point carries weight `1/(n+2)²`; with this value the weights sum
/// to one and the rule is exact for Gaussian moments up to degree five.
/// The axis weights `(4-n)/(2(n+2)²)` go negative for `n > 4`, and they
/// already occupy the trailing slots.
pub fn make_5dckf_rule(n: usize) -> Result<SigmaRule> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let nf = n as f64;
    let scale = (nf + 2.0).sqrt();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|k| ((k + 1)..n).map(move |l| (k, l)))
        .collect();
    let n_pts = 2 * n * n + 1;
    let mut gammas = DMatrix::zeros(n, n_pts);
    let mut w = DVector::zeros(n_pts);

    w[0] = 2.0 / (nf + 2.0);
    let off_axis = 1.0 / ((nf + 2.0) * (nf + 2.0));
    let axis = (4.0 - nf) / (2.0 * (nf + 2.0) * (nf + 2.0));
    let half = std::f64::consts::FRAC_1_SQRT_2 * scale;

    let mut col = 1;
    for second_sign in [1.0, -1.0] {
        for outer in [1.0, -1.0] {
            for &(k, l) in &pairs {
                gammas[(k, col)] = outer * half;
                gammas[(l, col)] = outer * second_sign * half;
                w[col] = off_axis;
                col += 1;
            }
        }
    }
    for outer in [1.0, -1.0] {
        for p in 0..n {
            gammas[(p, col)] = outer * scale;
            w[col] = axis;
            col += 1;
        }
    }
    debug_assert_eq!(col, n_pts);

    let wc = w.clone();
    Ok(SigmaRule::with_trailing_negatives(
        RuleKind::FifthDegreeCubature,
        gammas,
        w,
        wc,
    ))
}

/// Scaled unscented rule with `2n + 1` points.
pub fn make_ukf_rule(n: usize, params: UkfParams) -> Result<SigmaRule> {
    if n < 1 {
        return Err(Error::InvalidDimension(n));
    }
    let lambda = params.lambda(n);
    let spread = n as f64 + lambda;
    if !(spread > 0.0) {
        return Err(Error::DegenerateScaling(spread));
    }
    let n_pts = 2 * n + 1;
    let root = spread.sqrt();
    let mut gammas = DMatrix::zeros(n, n_pts);
    for i in 0..n {
        gammas[(i, 1 + i)] = root;
        gammas[(i, 1 + n + i)] = -root;
    }
    let wi = 1.0 / (2.0 * spread);
    let mut w = DVector::from_element(n_pts, wi);
    w[0] = lambda / spread;
    let mut wc = w.clone();
    wc[0] = w[0] + 1.0 - params.alpha * params.alpha + params.beta;
    Ok(SigmaRule::with_trailing_negatives(
        RuleKind::Ukf,
        gammas,
        w,
        wc,
    ))
}

/// Sigma points `mean + sqrt_cov · γ_i`, one per column.
pub fn draw_sigma_matrix(
    mean: &DVector<f64>,
    sqrt_cov: &LowerTriangular,
    rule: &SigmaRule,
) -> Result<DMatrix<f64>> {
    if mean.len() != rule.dim() || sqrt_cov.dim() != rule.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rule dimension {}, mean {}, factor {}",
            rule.dim(),
            mean.len(),
            sqrt_cov.dim()
        )));
    }
    let mut x = sqrt_cov.as_matrix() * rule.gammas();
    for mut c in x.column_iter_mut() {
        c += mean;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Sign;
    use approx::assert_relative_eq;

    #[test]
    fn cubature_n2_values() {
        let rule = make_5dckf_rule(2).unwrap();
        assert_eq!(rule.len(), 9);
        let w = rule.mean_weights();
        assert_relative_eq!(w[0], 0.5);
        for i in 1..5 {
            assert_relative_eq!(w[i], 1.0 / 16.0);
        }
        for i in 5..9 {
            assert_relative_eq!(w[i], 1.0 / 16.0);
        }
        assert_eq!(rule.signature().neg_count(), 0);
        assert_relative_eq!(w.sum(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cubature_n7_has_trailing_negative_axis_weights() {
        let rule = make_5dckf_rule(7).unwrap();
        assert_eq!(rule.len(), 99);
        assert_relative_eq!(rule.mean_weights()[0], 2.0 / 9.0);
        for i in 85..99 {
            assert_relative_eq!(rule.mean_weights()[i], -3.0 / 162.0, epsilon = 1e-16);
            assert_eq!(rule.signature().signs()[i], Sign::Minus);
        }
        assert_eq!(rule.signature().pos_count(), 85);
        assert!(rule.signature().is_trailing_negative());
        assert_relative_eq!(rule.mean_weights().sum(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn cubature_rejects_scalar_state() {
        assert!(matches!(make_5dckf_rule(1), Err(Error::InvalidDimension(1))));
    }

    #[test]
    fn ukf_n2_values() {
        let rule = make_ukf_rule(
            2,
            UkfParams {
                alpha: 1.0,
                beta: 0.0,
                kappa: 1.0,
            },
        )
        .unwrap();
        assert_relative_eq!(rule.mean_weights()[0], 1.0 / 3.0);
        assert_relative_eq!(rule.cov_weights()[0], 1.0 / 3.0);
        for i in 1..5 {
            assert_relative_eq!(rule.mean_weights()[i], 1.0 / 6.0);
        }
        assert_eq!(rule.signature().neg_count(), 0);
    }

    #[test]
    fn ukf_classical_n7_moves_centre_to_the_end() {
        let rule = make_ukf_rule(7, UkfParams::classical(7)).unwrap();
        assert_relative_eq!(rule.mean_weights()[14], -4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(rule.cov_weights()[14], -4.0 / 3.0, epsilon = 1e-15);
        assert!(rule.gammas().column(14).iter().all(|&g| g == 0.0));
        let expected: Vec<Sign> = (0..15)
            .map(|i| if i < 14 { Sign::Plus } else { Sign::Minus })
            .collect();
        assert_eq!(rule.signature().signs(), expected.as_slice());
    }

    #[test]
    fn ukf_degenerate_scaling() {
        let p = UkfParams {
            alpha: 1.0,
            beta: 0.0,
            kappa: -3.0,
        };
        assert!(matches!(make_ukf_rule(3, p), Err(Error::DegenerateScaling(_))));
    }

    #[test]
    fn weight_factor_all_positive_signature() {
        let w = DVector::from_vec(vec![0.5, 0.25, 0.25]);
        let (_, s) = build_weight_factor(&w, &w);
        assert_eq!(s.neg_count(), 0);
    }

    #[test]
    fn weight_factor_reconstructs_w_for_cubature_n7() {
        let rule = make_5dckf_rule(7).unwrap();
        let s = rule.signature().to_matrix();
        let rebuilt = rule.sqrt_w_abs() * s * rule.sqrt_w_abs().transpose();
        let diff = (rebuilt - rule.weight_matrix()).amax();
        assert!(diff < 1e-13, "reconstruction error {diff:e}");
    }

    #[test]
    fn draw_sigma_matrix_cases() {
        let rule = make_5dckf_rule(3).unwrap();
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let zero = LowerTriangular::from_lower_part(DMatrix::zeros(3, 3));
        let x = draw_sigma_matrix(&mean, &zero, &rule).unwrap();
        for c in x.column_iter() {
            assert_eq!(c, mean.column(0));
        }
        let x = draw_sigma_matrix(&DVector::zeros(3), &LowerTriangular::identity(3), &rule).unwrap();
        assert_eq!(&x, rule.gammas());
        assert!(matches!(
            draw_sigma_matrix(&DVector::zeros(2), &LowerTriangular::identity(3), &rule),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
