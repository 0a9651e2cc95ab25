//! Measurement updates.
//!
//! * [`mu_conventional`]: sigma-rule update on the full covariance,
//!   `R_e = Z W Zᵀ + R`, `P_xz = X W Zᵀ`, `P⁺ = P - K R_e Kᵀ`.
//! * [`mu_sqrt_onesweep`]: one J-orthogonal sweep over the pre-array
//!   `[[R^{1/2}, Z|W|^{1/2}], [0, X|W|^{1/2}]]` yields `R_e^{1/2}`,
//!   `P̄_xz = P_xz R_e^{-ᵀ/2}` and `P⁺^{1/2}` at once.
//! * [`mu_sqrt_joseph`]: two sweeps: one for `R_e^{1/2}`, one factoring the
//!   symmetric Joseph-type form `(X - KZ) W (X - KZ)ᵀ + K R Kᵀ`.
//! * [`mu_ekf_linearized`]: the classical linearized update, Joseph form.
//!
//! Innovation components flagged angular are wrapped to `(-π, π]` before the
//! gain is applied. The predicted measurement itself is the plain weighted
//! average of `h` over the sigma points, so it is only meaningful while the
//! points do not straddle the `±π` cut.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_lower, hyperbolic_block_triangularize, spd_solve_right, symmetrize_in_place,
    trisolve, LowerTriangular, Side, Signature,
};
use crate::sigma_rules::{draw_sigma_matrix, SigmaRule};
use crate::time_update::{GaussianBelief, SqrtGaussianBelief};

/// `z_k = h(k, x) + v_k`.
pub trait MeasurementModel: Send + Sync {
    /// Measurement dimension `m`.
    fn dim(&self) -> usize;

    fn measure(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// `h` applied to every column of `xs`.
    fn measure_points(&self, k: usize, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols = xs
            .column_iter()
            .map(|c| self.measure(k, &c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Analytic `∂h/∂x`; required by the linearized update only.
    fn jacobian(&self, _k: usize, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Err(Error::MissingJacobian)
    }

    /// `R`.
    fn noise_cov(&self) -> &DMatrix<f64>;

    /// Lower Cholesky factor of `R`.
    fn noise_sqrt(&self) -> &LowerTriangular;

    /// Whether output `i` is an angle.
    fn is_angular(&self, _i: usize) -> bool {
        false
    }

    /// Short identifier written to dataset manifests.
    fn describe(&self) -> String {
        "custom".to_string()
    }

    /// One draw of `v_k`; Gaussian `N(0, R)` unless overridden.
    fn sample_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let eta = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| StandardNormal.sample(&mut *rng)),
        );
        self.noise_sqrt().as_matrix() * eta
    }
}

/// `h(x) = H x` with Gaussian noise.
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    r_sqrt: LowerTriangular,
}

impl LinearMeasurement {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() || !r.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "H is {}x{}, R is {}x{}",
                h.nrows(),
                h.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        let r_sqrt = cholesky_lower(&r)?;
        Ok(Self { h, r, r_sqrt })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl MeasurementModel for LinearMeasurement {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn measure(&self, _k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.h * x)
    }

    fn measure_points(&self, _k: usize, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.h * xs)
    }

    fn jacobian(&self, _k: usize, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.h.clone())
    }

    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn noise_sqrt(&self) -> &LowerTriangular {
        &self.r_sqrt
    }
}

/// Innovation covariance as produced by the update that computed it.
#[derive(Debug, Clone, PartialEq)]
pub enum InnovationCov {
    Full(DMatrix<f64>),
    Factor(LowerTriangular),
}

impl InnovationCov {
    pub fn full(&self) -> DMatrix<f64> {
        match self {
            InnovationCov::Full(m) => m.clone(),
            InnovationCov::Factor(l) => l.gram(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateResult<B> {
    pub posterior: B,
    /// Wrapped innovation `z - ẑ`.
    pub innovation: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub predicted_measurement: DVector<f64>,
    pub innovation_cov: InnovationCov,
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn innovation<M: MeasurementModel + ?Sized>(
    model: &M,
    z: &DVector<f64>,
    z_hat: &DVector<f64>,
) -> DVector<f64> {
    let mut nu = z - z_hat;
    for i in 0..nu.len() {
        if model.is_angular(i) {
            nu[i] = wrap_angle(nu[i]);
        }
    }
    nu
}

/// Moves angular rows of the sigma-point outputs onto the branch of the
/// first point so that a set straddling ±π is averaged as one cluster.
fn align_angles<M: MeasurementModel + ?Sized>(model: &M, zs: &mut DMatrix<f64>) {
    if zs.ncols() == 0 {
        return;
    }
    for i in 0..zs.nrows() {
        if model.is_angular(i) {
            let reference = zs[(i, 0)];
            for j in 1..zs.ncols() {
                zs[(i, j)] = reference + wrap_angle(zs[(i, j)] - reference);
            }
        }
    }
}

fn check_dims<M: MeasurementModel + ?Sized>(
    n: usize,
    z: &DVector<f64>,
    model: &M,
    rule: Option<&SigmaRule>,
) -> Result<()> {
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "measurement has {} entries, model dimension is {}",
            z.len(),
            model.dim()
        )));
    }
    if let Some(rule) = rule {
        if rule.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "rule dimension {}, state dimension {n}",
                rule.dim()
            )));
        }
    }
    Ok(())
}

fn finite_vec(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState)
    }
}

fn finite_mat(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState)
    }
}

/// Conventional sigma-rule update on the full covariance.
pub fn mu_conventional<M: MeasurementModel + ?Sized>(
    belief: &GaussianBelief,
    z: &DVector<f64>,
    k: usize,
    model: &M,
    rule: &SigmaRule,
) -> Result<UpdateResult<GaussianBelief>> {
    check_dims(belief.dim(), z, model, Some(rule))?;
    let sqrt_p = cholesky_lower(&belief.cov)?;
    let x = draw_sigma_matrix(&belief.mean, &sqrt_p, rule)?;
    let mut zs = model.measure_points(k, &x)?;
    finite_mat(&zs)?;
    align_angles(model, &mut zs);
    let z_hat = rule.weighted_mean(&zs);

    let mut re = rule.cross_moment(&zs, &zs) + model.noise_cov();
    symmetrize_in_place(&mut re);
    let pxz = rule.cross_moment(&x, &zs);
    let gain = spd_solve_right(&pxz, &re)?;

    let nu = innovation(model, z, &z_hat);
    let mean = &belief.mean + &gain * &nu;
    let mut cov = &belief.cov - &gain * &re * gain.transpose();
    symmetrize_in_place(&mut cov);
    finite_vec(&mean)?;
    finite_mat(&cov)?;

    Ok(UpdateResult {
        posterior: GaussianBelief { mean, cov },
        innovation: nu,
        gain,
        predicted_measurement: z_hat,
        innovation_cov: InnovationCov::Full(re),
    })
}

/// Square-root update by one block triangularization of the joint pre-array.
pub fn mu_sqrt_onesweep<M: MeasurementModel + ?Sized>(
    belief: &SqrtGaussianBelief,
    z: &DVector<f64>,
    k: usize,
    model: &M,
    rule: &SigmaRule,
) -> Result<UpdateResult<SqrtGaussianBelief>> {
    let n = belief.dim();
    let m = model.dim();
    check_dims(n, z, model, Some(rule))?;
    let n_pts = rule.len();

    let x = draw_sigma_matrix(&belief.mean, &belief.sqrt_cov, rule)?;
    let mut zs = model.measure_points(k, &x)?;
    finite_mat(&zs)?;
    align_angles(model, &mut zs);
    let z_hat = rule.weighted_mean(&zs);

    let mut pre = DMatrix::zeros(m + n, m + n_pts);
    pre.view_mut((0, 0), (m, m))
        .copy_from(model.noise_sqrt().as_matrix());
    pre.view_mut((0, m), (m, n_pts))
        .copy_from(&rule.weighted_deviations(&zs));
    pre.view_mut((m, m), (n, n_pts))
        .copy_from(&rule.weighted_deviations(&x));
    let j = Signature::all_positive(m).concat(rule.signature());
    let post = hyperbolic_block_triangularize(&pre, &j)?;
    let r = post.post_array();

    let re_sqrt = LowerTriangular::from_lower_part(r.view((0, 0), (m, m)).into_owned());
    let pxz_bar = r.view((m, 0), (n, m)).into_owned();
    let p_sqrt = LowerTriangular::from_lower_part(r.view((m, m), (n, n)).into_owned());

    let gain = trisolve(&re_sqrt, &pxz_bar, Side::Right, false)?;
    let nu = innovation(model, z, &z_hat);
    let mean = &belief.mean + &gain * &nu;
    finite_vec(&mean)?;

    Ok(UpdateResult {
        posterior: SqrtGaussianBelief {
            mean,
            sqrt_cov: p_sqrt,
        },
        innovation: nu,
        gain,
        predicted_measurement: z_hat,
        innovation_cov: InnovationCov::Factor(re_sqrt),
    })
}

/// Square-root update through the Joseph-type stabilized covariance form.
pub fn mu_sqrt_joseph<M: MeasurementModel + ?Sized>(
    belief: &SqrtGaussianBelief,
    z: &DVector<f64>,
    k: usize,
    model: &M,
    rule: &SigmaRule,
) -> Result<UpdateResult<SqrtGaussianBelief>> {
    let n = belief.dim();
    let m = model.dim();
    check_dims(n, z, model, Some(rule))?;
    let n_pts = rule.len();
    let j = Signature::all_positive(m).concat(rule.signature());

    let x = draw_sigma_matrix(&belief.mean, &belief.sqrt_cov, rule)?;
    let mut zs = model.measure_points(k, &x)?;
    finite_mat(&zs)?;
    align_angles(model, &mut zs);
    let z_hat = rule.weighted_mean(&zs);

    let mut pre = DMatrix::zeros(m, m + n_pts);
    pre.view_mut((0, 0), (m, m))
        .copy_from(model.noise_sqrt().as_matrix());
    pre.view_mut((0, m), (m, n_pts))
        .copy_from(&rule.weighted_deviations(&zs));
    let re_sqrt = hyperbolic_block_triangularize(&pre, &j)?.factor();

    let pxz = rule.cross_moment(&x, &zs);
    let pxz_bar = trisolve(&re_sqrt, &pxz, Side::Right, true)?;
    let gain = trisolve(&re_sqrt, &pxz_bar, Side::Right, false)?;

    let mut pre = DMatrix::zeros(n, m + n_pts);
    pre.view_mut((0, 0), (n, m))
        .copy_from(&(&gain * model.noise_sqrt().as_matrix()));
    // Centre before applying the gain: the raw K·Z can be orders of
    // magnitude larger than the residual it produces.
    let x_mean = rule.weighted_mean(&x);
    let residual = (&x - &x_mean * ones_row(n_pts)) - &gain * (&zs - &z_hat * ones_row(n_pts));
    pre.view_mut((0, m), (n, n_pts))
        .copy_from(&rule.weighted_deviations(&residual));
    let p_sqrt = hyperbolic_block_triangularize(&pre, &j)?.factor();

    let nu = innovation(model, z, &z_hat);
    let mean = &belief.mean + &gain * &nu;
    finite_vec(&mean)?;

    Ok(UpdateResult {
        posterior: SqrtGaussianBelief {
            mean,
            sqrt_cov: p_sqrt,
        },
        innovation: nu,
        gain,
        predicted_measurement: z_hat,
        innovation_cov: InnovationCov::Factor(re_sqrt),
    })
}

fn ones_row(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(1, n, 1.0)
}

/// Linearized (EKF) update with the Joseph-form covariance.
pub fn mu_ekf_linearized<M: MeasurementModel + ?Sized>(
    belief: &GaussianBelief,
    z: &DVector<f64>,
    k: usize,
    model: &M,
) -> Result<UpdateResult<GaussianBelief>> {
    let n = belief.dim();
    check_dims(n, z, model, None)?;
    let h = model.jacobian(k, &belief.mean)?;
    if h.nrows() != model.dim() || h.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Jacobian is {}x{}, expected {}x{n}",
            h.nrows(),
            h.ncols(),
            model.dim()
        )));
    }
    let z_hat = model.measure(k, &belief.mean)?;
    let pht = &belief.cov * h.transpose();
    let mut re = &h * &pht + model.noise_cov();
    symmetrize_in_place(&mut re);
    let gain = spd_solve_right(&pht, &re)?;

    let nu = innovation(model, z, &z_hat);
    let mean = &belief.mean + &gain * &nu;
    let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &h;
    let mut cov = &i_kh * &belief.cov * i_kh.transpose()
        + &gain * model.noise_cov() * gain.transpose();
    symmetrize_in_place(&mut cov);
    finite_vec(&mean)?;
    finite_mat(&cov)?;

    Ok(UpdateResult {
        posterior: GaussianBelief { mean, cov },
        innovation: nu,
        gain,
        predicted_measurement: z_hat,
        innovation_cov: InnovationCov::Full(re),
    })
}
