//! Experiment models: coordinated-turn dynamics, a 3-D radar with optional
//! glint noise, an ill-conditioned linear sensor, and dataset simulation.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, LowerTriangular};
use crate::measurement_update::MeasurementModel;
use crate::ode::euler_maruyama_simulate;
use crate::time_update::ProcessModel;

const DEG: f64 = PI / 180.0;

/// Aircraft in a coordinated turn, `x = [ε, ε̇, η, η̇, ζ, ζ̇, ω]`.
#[derive(Debug, Clone)]
pub struct CoordinatedTurn {
    g: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl CoordinatedTurn {
    /// Velocity diffusion intensity `σ₁`.
    pub const SIGMA_VELOCITY: f64 = 0.447_213_595_499_957_9; // √0.2
    /// Turn-rate diffusion intensity `σ₂` (0.007 °/s).
    pub const SIGMA_TURN_RATE: f64 = 0.007 * DEG;
    /// Nominal turn rate, 3 °/s.
    pub const TURN_RATE: f64 = 3.0 * DEG;

    pub fn new() -> Self {
        Self::with_intensities(Self::SIGMA_VELOCITY, Self::SIGMA_TURN_RATE)
    }

    /// Same dynamics with custom diffusion intensities; zeros give the
    /// deterministic model.
    pub fn with_intensities(sigma_v: f64, sigma_w: f64) -> Self {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.0, sigma_v, 0.0, sigma_v, 0.0, sigma_v, sigma_w,
        ]));
        Self {
            g,
            q: DMatrix::identity(7, 7),
        }
    }

    /// `x̄₀ = [1000 m, 0, 2650 m, 150 m/s, 200 m, 0, 3 °/s]`.
    pub fn initial_mean() -> DVector<f64> {
        DVector::from_vec(vec![1000.0, 0.0, 2650.0, 150.0, 200.0, 0.0, Self::TURN_RATE])
    }

    /// `Π₀ = 0.01 I₇`, the turn-rate entry in rad².
    pub fn initial_cov() -> DMatrix<f64> {
        DMatrix::identity(7, 7) * 0.01
    }
}

impl Default for CoordinatedTurn {
    fn default() -> Self {
        Self::new()
    }
}

impl ProcessModel for CoordinatedTurn {
    fn dim(&self) -> usize {
        7
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        let w = x[6];
        DVector::from_vec(vec![x[1], -w * x[3], x[3], w * x[1], x[5], 0.0, 0.0])
    }

    fn jacobian(&self, _t: f64, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut j = DMatrix::zeros(7, 7);
        j[(0, 1)] = 1.0;
        j[(1, 3)] = -x[6];
        j[(1, 6)] = -x[3];
        j[(2, 3)] = 1.0;
        j[(3, 1)] = x[6];
        j[(3, 6)] = x[1];
        j[(4, 5)] = 1.0;
        Some(j)
    }

    fn diffusion(&self) -> &DMatrix<f64> {
        &self.g
    }

    fn diffusion_cov(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn describe(&self) -> String {
        "coordinated-turn".to_string()
    }
}

/// Two-component glint mixture: with probability `p` the noise is drawn from
/// `N(0, R_g)` instead of `N(0, R)`.
#[derive(Debug, Clone)]
pub struct Glint {
    probability: f64,
    cov: DMatrix<f64>,
    sqrt: LowerTriangular,
}

impl Glint {
    pub fn new(probability: f64, cov: DMatrix<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&probability) {
            return Err(Error::InvalidParameter(format!(
                "glint probability must lie in [0, 1), got {probability}"
            )));
        }
        let sqrt = cholesky_lower(&cov)?;
        Ok(Self {
            probability,
            cov,
            sqrt,
        })
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Range / azimuth / elevation radar at the origin.
#[derive(Debug, Clone)]
pub struct RadarModel {
    /// Covariance handed to the filters.
    r: DMatrix<f64>,
    r_sqrt: LowerTriangular,
    nominal_sqrt: LowerTriangular,
    glint: Option<Glint>,
}

impl RadarModel {
    pub const SIGMA_RANGE: f64 = 50.0;
    pub const SIGMA_ANGLE: f64 = 0.1 * DEG;

    /// Gaussian radar noise.
    pub fn new() -> Self {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Self::SIGMA_RANGE.powi(2),
            Self::SIGMA_ANGLE.powi(2),
            Self::SIGMA_ANGLE.powi(2),
        ]));
        let r_sqrt = LowerTriangular::from_diagonal(&[
            Self::SIGMA_RANGE,
            Self::SIGMA_ANGLE,
            Self::SIGMA_ANGLE,
        ]);
        Self {
            r,
            nominal_sqrt: r_sqrt.clone(),
            r_sqrt,
            glint: None,
        }
    }

    /// Glint noise with outlier covariance `scale · R`. The filters see the
    /// second moment of the mixture, `(1 - p) R + p R_g`.
    pub fn with_glint(probability: f64, scale: f64) -> Result<Self> {
        let mut radar = Self::new();
        let glint = Glint::new(probability, &radar.r * scale)?;
        radar.r = &radar.r * (1.0 - probability) + glint.cov() * probability;
        radar.r_sqrt = cholesky_lower(&radar.r)?;
        radar.glint = Some(glint);
        Ok(radar)
    }

    pub fn glint(&self) -> Option<&Glint> {
        self.glint.as_ref()
    }

    /// Noise-free measurement `[r, θ, φ]`.
    pub fn observe(x: &DVector<f64>) -> Result<DVector<f64>> {
        let (e, n, u) = (x[0], x[2], x[4]);
        let rho2 = e * e + n * n;
        if rho2 == 0.0 {
            return Err(Error::DegenerateGeometry);
        }
        let rho = rho2.sqrt();
        Ok(DVector::from_vec(vec![
            (rho2 + u * u).sqrt(),
            n.atan2(e),
            (u / rho).atan(),
        ]))
    }
}

impl Default for RadarModel {
    fn default() -> Self {
        Self::new()
    }
}

impl MeasurementModel for RadarModel {
    fn dim(&self) -> usize {
        3
    }

    fn measure(&self, _k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        Self::observe(x)
    }

    fn jacobian(&self, _k: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (e, n, u) = (x[0], x[2], x[4]);
        let rho2 = e * e + n * n;
        if rho2 == 0.0 {
            return Err(Error::DegenerateGeometry);
        }
        let rho = rho2.sqrt();
        let r2 = rho2 + u * u;
        let r = r2.sqrt();
        let mut j = DMatrix::zeros(3, 7);
        j[(0, 0)] = e / r;
        j[(0, 2)] = n / r;
        j[(0, 4)] = u / r;
        j[(1, 0)] = -n / rho2;
        j[(1, 2)] = e / rho2;
        j[(2, 0)] = -e * u / (rho * r2);
        j[(2, 2)] = -n * u / (rho * r2);
        j[(2, 4)] = rho / r2;
        Ok(j)
    }

    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn noise_sqrt(&self) -> &LowerTriangular {
        &self.r_sqrt
    }

    fn is_angular(&self, i: usize) -> bool {
        i > 0
    }

    fn describe(&self) -> String {
        match &self.glint {
            Some(g) => format!("radar-glint(p={})", g.probability),
            None => "radar-gaussian".to_string(),
        }
    }

    fn sample_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let factor = match &self.glint {
            Some(g) if rng.random::<f64>() < g.probability => g.sqrt.as_matrix(),
            _ => self.nominal_sqrt.as_matrix(),
        };
        let eta = DVector::from_iterator(3, (0..3).map(|_| StandardNormal.sample(&mut *rng)));
        factor * eta
    }
}

/// One draw of the measurement noise of `model`.
pub fn sample_measurement_noise<M: MeasurementModel + ?Sized>(
    model: &M,
    rng: &mut dyn RngCore,
) -> DVector<f64> {
    model.sample_noise(rng)
}

/// Two nearly collinear observations of the state sum:
/// `H = [1 … 1; 1 … 1+δ]`, `R = δ² I₂`.
#[derive(Debug, Clone)]
pub struct IllCondModel {
    delta: f64,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    r_sqrt: LowerTriangular,
}

impl IllCondModel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "conditioning parameter must be positive, got {delta}"
            )));
        }
        let mut h = DMatrix::from_element(2, 7, 1.0);
        h[(1, 6)] = 1.0 + delta;
        Ok(Self {
            delta,
            h,
            r: DMatrix::identity(2, 2) * (delta * delta),
            r_sqrt: LowerTriangular::from_diagonal(&[delta, delta]),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl MeasurementModel for IllCondModel {
    fn dim(&self) -> usize {
        2
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

    fn describe(&self) -> String {
        format!("illcond(delta={:e})", self.delta)
    }
}

/// Truth trajectory and measurements at `t_k = t₀ + kΔ`, `k = 1..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub seed: u64,
    pub delta: f64,
    pub em_step: f64,
    pub t0: f64,
    pub initial_state: DVector<f64>,
    pub times: Vec<f64>,
    pub truth: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub model: String,
    pub noise: String,
}

/// Companion JSON written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub delta_s: f64,
    pub horizon_s: f64,
    pub em_step_s: f64,
    pub model: String,
    pub noise: String,
    pub t0_s: f64,
    pub state_dim: usize,
    pub measurement_dim: usize,
    pub initial_state: Vec<f64>,
}

impl SimulatedDataset {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.delta * self.len() as f64
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurements.first().map_or(0, |z| z.len())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            seed: self.seed,
            delta_s: self.delta,
            horizon_s: self.horizon(),
            em_step_s: self.em_step,
            model: self.model.clone(),
            noise: self.noise.clone(),
            t0_s: self.t0,
            state_dim: self.state_dim(),
            measurement_dim: self.measurement_dim(),
            initial_state: self.initial_state.iter().copied().collect(),
        }
    }

    /// Writes `t,x1..xn,z1..zm` rows to `csv_path` and the manifest to
    /// `manifest_path`.
    pub fn save(&self, csv_path: &Path, manifest_path: &Path) -> Result<()> {
        let io_err = |path: &Path, e: &dyn std::fmt::Display| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(csv_path).map_err(|e| io_err(csv_path, &e))?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim()).map(|i| format!("x{i}")));
        header.extend((1..=self.measurement_dim()).map(|i| format!("z{i}")));
        w.write_record(&header).map_err(|e| io_err(csv_path, &e))?;
        for k in 0..self.len() {
            let row = std::iter::once(self.times[k])
                .chain(self.truth[k].iter().copied())
                .chain(self.measurements[k].iter().copied())
                .map(|v| format!("{v:.16e}"));
            w.write_record(row).map_err(|e| io_err(csv_path, &e))?;
        }
        w.flush().map_err(|e| io_err(csv_path, &e))?;

        let file = File::create(manifest_path).map_err(|e| io_err(manifest_path, &e))?;
        serde_json::to_writer_pretty(file, &self.manifest()).map_err(|e| io_err(manifest_path, &e))
    }

    pub fn load(csv_path: &Path, manifest_path: &Path) -> Result<Self> {
        let io_err = |path: &Path, e: &dyn std::fmt::Display| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let fmt_err = |path: &Path, message: String| Error::Format {
            path: path.display().to_string(),
            message,
        };
        let file = File::open(manifest_path).map_err(|e| io_err(manifest_path, &e))?;
        let m: DatasetManifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| fmt_err(manifest_path, e.to_string()))?;
        if m.initial_state.len() != m.state_dim {
            return Err(fmt_err(manifest_path, "initial_state length differs from state_dim".into()));
        }

        let mut r = csv::Reader::from_path(csv_path).map_err(|e| io_err(csv_path, &e))?;
        let width = 1 + m.state_dim + m.measurement_dim;
        let (mut times, mut truth, mut measurements) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| fmt_err(csv_path, e.to_string()))?;
            if rec.len() != width {
                return Err(fmt_err(
                    csv_path,
                    format!("row {} has {} fields, expected {width}", line + 1, rec.len()),
                ));
            }
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| fmt_err(csv_path, format!("row {}: {e}", line + 1)))?;
            times.push(vals[0]);
            truth.push(DVector::from_column_slice(&vals[1..1 + m.state_dim]));
            measurements.push(DVector::from_column_slice(&vals[1 + m.state_dim..]));
        }
        Ok(Self {
            seed: m.seed,
            delta: m.delta_s,
            em_step: m.em_step_s,
            t0: m.t0_s,
            initial_state: DVector::from_vec(m.initial_state),
            times,
            truth,
            measurements,
            model: m.model,
            noise: m.noise,
        })
    }
}

/// Draws `x₀ ~ N(x̄₀, Π₀)`, propagates it by Euler–Maruyama with step
/// `em_step` across `K` sampling intervals of length `delta`, and measures
/// each sampled state. The run is a pure function of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_dataset<P, M>(
    process: &P,
    meas: &M,
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    delta: f64,
    steps: usize,
    em_step: f64,
    seed: u64,
) -> Result<SimulatedDataset>
where
    P: ProcessModel + ?Sized,
    M: MeasurementModel + ?Sized,
{
    if !(delta > 0.0) || steps == 0 || !(em_step > 0.0) || em_step > delta {
        return Err(Error::InvalidParameter(format!(
            "need delta > 0, K >= 1 and 0 < em_step <= delta (delta {delta}, K {steps}, em_step {em_step})"
        )));
    }
    let n = process.dim();
    if mean0.len() != n || cov0.nrows() != n || cov0.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial moments do not match state dimension {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt0 = cholesky_lower(cov0)?;
    let eta = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    let x0 = mean0 + sqrt0.as_matrix() * eta;

    let t0 = 0.0;
    let mut x = x0.clone();
    let mut times = Vec::with_capacity(steps);
    let mut truth = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    for k in 1..=steps {
        let ta = t0 + (k - 1) as f64 * delta;
        let tb = t0 + k as f64 * delta;
        x = euler_maruyama_simulate(process, &x, ta, tb, em_step, &mut rng)?;
        let z = meas.measure(k, &x)? + meas.sample_noise(&mut rng);
        times.push(tb);
        truth.push(x.clone());
        measurements.push(z);
    }
    Ok(SimulatedDataset {
        seed,
        delta,
        em_step,
        t0,
        initial_state: x0,
        times,
        truth,
        measurements,
        model: process.describe(),
        noise: meas.describe(),
    })
}
