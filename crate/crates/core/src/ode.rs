//! Adaptive explicit Runge–Kutta integration and Euler–Maruyama simulation.
//!
//! [`integrate_adaptive`] is a Dormand–Prince 5(4) pair with FSAL, local
//! extrapolation and a weighted RMS error norm. It is what the time-update
//! step uses to solve the moment differential equations to a user tolerance.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::time_update::ProcessModel;

/// Absolute / relative tolerance pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    abs: f64,
    rel: f64,
}

impl Tolerances {
    pub fn new(abs: f64, rel: f64) -> Result<Self> {
        if !(abs > 0.0 && abs.is_finite() && rel > 0.0 && rel.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive and finite (abs {abs}, rel {rel})"
            )));
        }
        Ok(Self { abs, rel })
    }

    /// The same value for both tolerances.
    pub fn uniform(tol: f64) -> Result<Self> {
        Self::new(tol, tol)
    }

    pub fn abs(&self) -> f64 {
        self.abs
    }

    pub fn rel(&self) -> f64 {
        self.rel
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
// Fifth-order weights; also the last stage row (FSAL).
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the fifth- and fourth-order solutions.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const UNDERFLOW: f64 = 1e-14;

fn stage(y: &DVector<f64>, h: f64, coeffs: &[f64], k: &[DVector<f64>]) -> DVector<f64> {
    let mut out = y.clone();
    for (a, ki) in coeffs.iter().zip(k) {
        if *a != 0.0 {
            out.axpy(h * a, ki, 1.0);
        }
    }
    out
}

fn checked(v: DVector<f64>) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteState)
    }
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` and returns `y(t1)`.
///
/// A step is accepted when the RMS of `err_i / (abs + rel·max(|y_i|, |ŷ_i|))`
/// is at most one; the next step is `0.9·h·err^(-1/5)` clipped to
/// `[0.2h, 5h]` (no growth right after a rejection). The initial step
/// follows the usual derivative-scaled heuristic, so a vanishing right-hand
/// side is crossed in a single step. The last step is shortened to land
/// exactly on `t1`.
pub fn integrate_adaptive<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    tol: &Tolerances,
) -> Result<(DVector<f64>, OdeStats)>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "integration span [{t0}, {t1}] is not increasing"
        )));
    }
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    let mut stats = OdeStats::default();
    if t1 == t0 {
        return Ok((y0.clone(), stats));
    }
    let span = t1 - t0;
    let h_min = UNDERFLOW * span;

    let mut t = t0;
    let mut y = y0.clone();
    let mut f = checked(rhs(t, &y)?)?;
    stats.rhs_evals += 1;

    let threshold = tol.abs / tol.rel;
    let rh = f
        .iter()
        .zip(y.iter())
        .map(|(fi, yi)| fi.abs() / yi.abs().max(threshold))
        .fold(0.0, f64::max)
        / (0.8 * tol.rel.powf(0.2));
    let mut h = if span * rh > 1.0 { 1.0 / rh } else { span };

    let mut just_rejected = false;
    loop {
        let last = t + h >= t1 - 1e-12 * span;
        if last {
            h = t1 - t;
        }
        let mut k = Vec::with_capacity(7);
        k.push(f.clone());
        k.push(checked(rhs(t + C[1] * h, &stage(&y, h, &A2, &k))?)?);
        k.push(checked(rhs(t + C[2] * h, &stage(&y, h, &A3, &k))?)?);
        k.push(checked(rhs(t + C[3] * h, &stage(&y, h, &A4, &k))?)?);
        k.push(checked(rhs(t + C[4] * h, &stage(&y, h, &A5, &k))?)?);
        k.push(checked(rhs(t + C[5] * h, &stage(&y, h, &A6, &k))?)?);
        let y_new = checked(stage(&y, h, &B, &k))?;
        let t_new = if last { t1 } else { t + h };
        k.push(checked(rhs(t_new, &y_new)?)?);
        stats.rhs_evals += 6;

        let d = y.len().max(1) as f64;
        let mut sq = 0.0;
        for i in 0..y.len() {
            let e: f64 = E.iter().zip(&k).map(|(c, ki)| c * ki[i]).sum::<f64>() * h;
            let scale = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            sq += (e / scale).powi(2);
        }
        let err = (sq / d).sqrt();

        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };

        if err <= 1.0 {
            stats.accepted += 1;
            t = t_new;
            y = y_new;
            f = k.pop().expect("seven stages");
            if last {
                return Ok((y, stats));
            }
            h *= if just_rejected { factor.min(1.0) } else { factor };
            just_rejected = false;
        } else {
            stats.rejected += 1;
            h *= factor.min(1.0);
            just_rejected = true;
        }
        if h < h_min {
            return Err(Error::StepSizeUnderflow { t, h });
        }
    }
}

/// Euler–Maruyama trajectory of `dx = f(t,x)dt + G dβ`, `E[dβ dβᵀ] = Q dt`.
///
/// Returns the states at `t0, t0+h, …, t1`; the final step is shortened if
/// `h` does not divide the span.
pub fn euler_maruyama_path<P, R>(
    model: &P,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    h: f64,
    rng: &mut R,
) -> Result<Vec<(f64, DVector<f64>)>>
where
    P: ProcessModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut path = vec![(t0, x0.clone())];
    em_run(model, x0, t0, t1, h, rng, |t, x| path.push((t, x.clone())))?;
    Ok(path)
}

/// Euler–Maruyama terminal state; see [`euler_maruyama_path`].
pub fn euler_maruyama_simulate<P, R>(
    model: &P,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    h: f64,
    rng: &mut R,
) -> Result<DVector<f64>>
where
    P: ProcessModel + ?Sized,
    R: Rng + ?Sized,
{
    em_run(model, x0, t0, t1, h, rng, |_, _| {})
}

fn em_run<P, R, V>(
    model: &P,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    h: f64,
    rng: &mut R,
    mut visit: V,
) -> Result<DVector<f64>>
where
    P: ProcessModel + ?Sized,
    R: Rng + ?Sized,
    V: FnMut(f64, &DVector<f64>),
{
    if !(h > 0.0) || !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!(
            "Euler-Maruyama needs h > 0 and t1 >= t0 (h {h}, span [{t0}, {t1}])"
        )));
    }
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, model dimension is {}",
            x0.len(),
            model.dim()
        )));
    }
    let span = t1 - t0;
    let ratio = span / h;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };

    let g = model.diffusion();
    let q = model.diffusion_cov();
    let noise_gain = if q.nrows() == 0 {
        g.clone()
    } else {
        g * cholesky_lower(q)?.as_matrix()
    };
    let q_dim = noise_gain.ncols();

    let mut x = x0.clone();
    let mut eta = DVector::<f64>::zeros(q_dim);
    for j in 0..steps {
        let t = t0 + j as f64 * h;
        let t_next = if j + 1 == steps { t1 } else { t0 + (j + 1) as f64 * h };
        let dt = t_next - t;
        let drift = model.drift(t, &x);
        for e in eta.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        x.axpy(dt, &drift, 1.0);
        x.gemv(dt.sqrt(), &noise_gain, &eta, 1.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        visit(t_next, &x);
    }
    Ok(x)
}
