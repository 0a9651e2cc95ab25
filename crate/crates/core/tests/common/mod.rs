#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `A Aᵀ + shift·I` for a Gaussian `A`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let a = gaussian_matrix(rng, n, n);
    &a * a.transpose() + DMatrix::identity(n, n) * shift
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Textbook Kalman update with the Joseph-form covariance.
pub fn kalman_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let s = h * cov * h.transpose() + r;
    let gain = cov * h.transpose() * s.try_inverse().expect("innovation covariance is invertible");
    let mean = mean + &gain * (z - h * mean);
    let a = DMatrix::identity(n, n) - &gain * h;
    let cov = &a * cov * a.transpose() + &gain * r * gain.transpose();
    (mean, cov)
}

/// Exact discretization of `dx = Fx dt + G dβ` over `dt` by the Van Loan
/// block exponential: returns `(Φ, Q_d)`.
pub fn van_loan(f: &DMatrix<f64>, gqg: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = f.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-f * dt));
    m.view_mut((0, n), (n, n)).copy_from(&(gqg * dt));
    m.view_mut((n, n), (n, n)).copy_from(&(f.transpose() * dt));
    let e = m.exp();
    let phi = e.view((n, n), (n, n)).transpose();
    let qd = &phi * e.view((0, n), (n, n));
    (phi, (&qd + qd.transpose()) * 0.5)
}

/// Central differences with a fixed relative step.
pub fn central_difference(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    jac
}
