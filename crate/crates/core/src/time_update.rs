//! Continuous-discrete EKF time update.
//!
//! Between two sampling instants the mean and covariance obey the moment
//! differential equations
//!
//! ```text
//! dx̂/dt = f(t, x̂)
//! dP/dt = F P + P Fᵀ + G Q Gᵀ,          F = ∂f/∂x at x̂
//! ```
//!
//! and the lower Cholesky factor `S` of `P = S Sᵀ` obeys
//!
//! ```text
//! dS/dt = S Φ(A + Aᵀ + B),   A = S⁻¹ F S,   B = S⁻¹ G Q Gᵀ S⁻ᵀ
//! ```
//!
//! Both systems are flattened column-wise as the `n × (n+1)` array
//! `[x̂ | P]` (or `[x̂ | S]`) and handed to [`integrate_adaptive`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, phi_map, symmetrize_in_place, trisolve, LowerTriangular, Side};
use crate::ode::{integrate_adaptive, Tolerances};

/// Drift, Jacobian and additive diffusion of `dx = f(t,x)dt + G dβ`.
pub trait ProcessModel: Send + Sync {
    fn dim(&self) -> usize;

    fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian `∂f/∂x`; `None` selects central finite differences.
    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `G`, an `n × q` matrix.
    fn diffusion(&self) -> &DMatrix<f64>;

    /// `Q`, the `q × q` covariance rate of the driving Brownian motion.
    fn diffusion_cov(&self) -> &DMatrix<f64>;

    /// Short identifier written to dataset manifests.
    fn describe(&self) -> String {
        "custom".to_string()
    }

    /// `G Q Gᵀ`.
    fn noise_intensity(&self) -> DMatrix<f64> {
        let g = self.diffusion();
        let mut gqg = g * self.diffusion_cov() * g.transpose();
        symmetrize_in_place(&mut gqg);
        gqg
    }
}

/// Central-difference Jacobian with step `√ε · max(1, |x_i|)`.
pub fn finite_difference_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let step_base = f64::EPSILON.sqrt();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let h = step_base * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        cols.push((f(&xp) - f(&xm)) / (xp[i] - xm[i]));
    }
    DMatrix::from_columns(&cols)
}

/// The model's Jacobian, or a finite-difference one when it has none.
pub fn process_jacobian<P: ProcessModel + ?Sized>(model: &P, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
    model
        .jacobian(t, x)
        .unwrap_or_else(|| finite_difference_jacobian(|y| model.drift(t, y), x))
}

/// Linear time-invariant drift `f(t, x) = F x`.
#[derive(Debug, Clone)]
pub struct LinearProcess {
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl LinearProcess {
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        if !f.is_square() || g.nrows() != n || !q.is_square() || q.nrows() != g.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "F {}x{}, G {}x{}, Q {}x{}",
                f.nrows(),
                f.ncols(),
                g.nrows(),
                g.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        Ok(Self { f, g, q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }
}

impl ProcessModel for LinearProcess {
    fn dim(&self) -> usize {
        self.f.nrows()
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x
    }

    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.f.clone())
    }

    fn diffusion(&self) -> &DMatrix<f64> {
        &self.g
    }

    fn diffusion_cov(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Mean and full covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} entries, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Cholesky-factored copy.
    pub fn to_sqrt(&self) -> Result<SqrtGaussianBelief> {
        Ok(SqrtGaussianBelief {
            mean: self.mean.clone(),
            sqrt_cov: cholesky_lower(&self.cov)?,
        })
    }
}

/// Mean and lower Cholesky factor of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtGaussianBelief {
    pub mean: DVector<f64>,
    pub sqrt_cov: LowerTriangular,
}

impl SqrtGaussianBelief {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn to_full(&self) -> GaussianBelief {
        GaussianBelief {
            mean: self.mean.clone(),
            cov: self.sqrt_cov.gram(),
        }
    }
}

/// Column-stacked `[x̂ | P]` / `[x̂ | S]` flattening used by the integrator.
pub trait FlatBelief: Sized {
    fn pack(&self) -> DVector<f64>;
    fn unpack(v: &DVector<f64>, n: usize) -> Result<Self>;
}

fn split_flat(v: &DVector<f64>, n: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let expected = n * (n + 1);
    if v.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: v.len(),
        });
    }
    let mean = DVector::from_column_slice(&v.as_slice()[..n]);
    let mat = DMatrix::from_column_slice(n, n, &v.as_slice()[n..]);
    Ok((mean, mat))
}

fn join_flat(mean: &DVector<f64>, mat: &DMatrix<f64>) -> DVector<f64> {
    let mut out = Vec::with_capacity(mean.len() * (mean.len() + 1));
    out.extend_from_slice(mean.as_slice());
    out.extend_from_slice(mat.as_slice());
    DVector::from_vec(out)
}

impl FlatBelief for GaussianBelief {
    fn pack(&self) -> DVector<f64> {
        join_flat(&self.mean, &self.cov)
    }

    fn unpack(v: &DVector<f64>, n: usize) -> Result<Self> {
        let (mean, cov) = split_flat(v, n)?;
        Ok(Self { mean, cov })
    }
}

impl FlatBelief for SqrtGaussianBelief {
    fn pack(&self) -> DVector<f64> {
        join_flat(&self.mean, self.sqrt_cov.as_matrix())
    }

    fn unpack(v: &DVector<f64>, n: usize) -> Result<Self> {
        let (mean, s) = split_flat(v, n)?;
        Ok(Self {
            mean,
            sqrt_cov: LowerTriangular::from_lower_part(s),
        })
    }
}

/// Right-hand side of the mean/covariance MDEs on the flat `[x̂ | P]` vector.
pub fn mde_rhs<P: ProcessModel + ?Sized>(
    model: &P,
    gqg: &DMatrix<f64>,
    t: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (x, p) = split_flat(v, model.dim())?;
    let jac = process_jacobian(model, t, &x);
    let fp = &jac * &p;
    let dp = &fp + fp.transpose() + gqg;
    Ok(join_flat(&model.drift(t, &x), &dp))
}

/// Right-hand side of the mean / Cholesky-factor system on `[x̂ | S]`.
pub fn sqrt_mde_rhs<P: ProcessModel + ?Sized>(
    model: &P,
    gqg: &DMatrix<f64>,
    t: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (x, s) = split_flat(v, model.dim())?;
    let s = LowerTriangular::from_lower_part(s);
    let jac = process_jacobian(model, t, &x);
    let a = trisolve(&s, &(&jac * s.as_matrix()), Side::Left, false)?;
    let c = trisolve(&s, gqg, Side::Left, false)?;
    let b = trisolve(&s, &c, Side::Right, true)?;
    let m = &a + a.transpose() + b;
    let ds = s.as_matrix() * phi_map(&m);
    Ok(join_flat(&model.drift(t, &x), &ds))
}

/// Conventional EKF prediction from `t0` to `t1`.
pub fn tu_ekf<P: ProcessModel + ?Sized>(
    belief: &GaussianBelief,
    model: &P,
    t0: f64,
    t1: f64,
    tol: &Tolerances,
) -> Result<GaussianBelief> {
    let n = model.dim();
    if belief.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "belief dimension {}, model dimension {n}",
            belief.dim()
        )));
    }
    if t1 == t0 {
        return Ok(belief.clone());
    }
    let gqg = model.noise_intensity();
    let (v, _) = integrate_adaptive(|t, v| mde_rhs(model, &gqg, t, v), t0, t1, &belief.pack(), tol)?;
    let mut out = GaussianBelief::unpack(&v, n)?;
    symmetrize_in_place(&mut out.cov);
    Ok(out)
}

/// Square-root EKF prediction from `t0` to `t1`.
///
/// If the propagated factor ends up with a non-positive diagonal entry it
/// is re-factorized from `S Sᵀ`; a failure there is reported as
/// `NotPositiveDefinite`.
pub fn tu_ekf_sqrt<P: ProcessModel + ?Sized>(
    belief: &SqrtGaussianBelief,
    model: &P,
    t0: f64,
    t1: f64,
    tol: &Tolerances,
) -> Result<SqrtGaussianBelief> {
    let n = model.dim();
    if belief.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "belief dimension {}, model dimension {n}",
            belief.dim()
        )));
    }
    if t1 == t0 {
        return Ok(belief.clone());
    }
    let gqg = model.noise_intensity();
    let (v, _) = integrate_adaptive(
        |t, v| sqrt_mde_rhs(model, &gqg, t, v),
        t0,
        t1,
        &belief.pack(),
        tol,
    )?;
    let mut out = SqrtGaussianBelief::unpack(&v, n)?;
    if !out.sqrt_cov.has_positive_diagonal() {
        out.sqrt_cov = cholesky_lower(&out.sqrt_cov.gram())?;
    }
    Ok(out)
}
