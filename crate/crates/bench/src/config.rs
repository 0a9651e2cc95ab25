use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cdkf::filters::FilterSpec;
use cdkf::ode::Tolerances;
use serde::Serialize;

use crate::error::BenchError;

/// Environment variable capping the number of Monte Carlo worker threads.
pub const THREADS_ENV: &str = "CDKF_THREADS";

/// Position-error threshold above which a cell counts as diverged (m).
pub const FAILURE_THRESHOLD_M: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Coordinated turn with Gaussian radar noise.
    Gauss,
    /// Coordinated turn with glint radar noise.
    Glint,
    /// Coordinated turn observed by the ill-conditioned linear sensor.
    Illcond,
    /// Gaussian scenario repeated over several sampling periods.
    DeltaSweep,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Gauss => "gauss",
            Experiment::Glint => "glint",
            Experiment::Illcond => "illcond",
            Experiment::DeltaSweep => "delta-sweep",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "gauss" => Ok(Experiment::Gauss),
            "glint" => Ok(Experiment::Glint),
            "illcond" => Ok(Experiment::Illcond),
            "delta-sweep" => Ok(Experiment::DeltaSweep),
            _ => Err(BenchError::config(
                "--experiment",
                format!("unknown experiment `{s}` (expected gauss, glint, illcond or delta-sweep)"),
            )),
        }
    }
}

/// Glint mixture parameters of the radar noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlintParams {
    pub probability: f64,
    pub scale: f64,
}

impl Default for GlintParams {
    fn default() -> Self {
        Self {
            probability: 0.25,
            scale: 100.0,
        }
    }
}

/// Everything needed to reproduce one table of results.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Sampling periods Δ (s).
    pub sampling_periods: Vec<f64>,
    /// Conditioning parameters δ for the ill-conditioned sensor.
    pub ill_deltas: Vec<f64>,
    pub runs: usize,
    pub horizon: f64,
    pub seed: u64,
    pub tol: Tolerances,
    pub filters: Vec<FilterSpec>,
    pub em_step: f64,
    pub glint: GlintParams,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: Δ = 1 s, M = 100, 150 s horizon, tolerance
    /// 1e-4, Euler–Maruyama truth step 1e-3 s, every filter.
    pub fn new(experiment: Experiment) -> Self {
        let tol = Tolerances::uniform(1e-4).expect("valid tolerance");
        Self {
            experiment,
            sampling_periods: vec![1.0],
            ill_deltas: Vec::new(),
            runs: 100,
            horizon: 150.0,
            seed: 1,
            tol,
            filters: FilterSpec::all(tol),
            em_step: 1e-3,
            glint: GlintParams::default(),
            out_dir: None,
        }
    }

    /// Number of sampling instants in the horizon for period `delta`.
    pub fn steps_for(&self, delta: f64) -> usize {
        ((self.horizon / delta) * (1.0 + 1e-12)).floor() as usize
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.runs == 0 {
            return Err(BenchError::config("--runs", "at least one run is required"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(BenchError::config("--horizon", "horizon must be positive"));
        }
        if self.sampling_periods.is_empty() {
            return Err(BenchError::config("--delta", "no sampling period given"));
        }
        for &d in &self.sampling_periods {
            if !(d > 0.0 && d.is_finite()) {
                return Err(BenchError::config("--delta", format!("sampling period {d} is not positive")));
            }
            if d > self.horizon {
                return Err(BenchError::config(
                    "--delta",
                    format!("sampling period {d} exceeds the horizon {}", self.horizon),
                ));
            }
            if self.em_step > d {
                return Err(BenchError::config(
                    "--em-step",
                    format!("truth step {} exceeds the sampling period {d}", self.em_step),
                ));
            }
        }
        if !(self.em_step > 0.0) {
            return Err(BenchError::config("--em-step", "truth step must be positive"));
        }
        if self.experiment == Experiment::Illcond {
            if self.ill_deltas.is_empty() {
                return Err(BenchError::config("--deltas", "no conditioning parameter given"));
            }
            if self.ill_deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
                return Err(BenchError::config("--deltas", "conditioning parameters must be positive"));
            }
            if self.ill_deltas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(BenchError::config("--deltas", "conditioning parameters must be decreasing"));
            }
        }
        if self.filters.is_empty() {
            return Err(BenchError::config("--filters", "no filter selected"));
        }
        if !(0.0..1.0).contains(&self.glint.probability) || !(self.glint.scale > 0.0) {
            return Err(BenchError::config("--glint", "glint probability must lie in [0, 1) and scale be positive"));
        }
        Ok(())
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment,
            "sampling_periods_s": self.sampling_periods,
            "ill_deltas": self.ill_deltas,
            "runs": self.runs,
            "horizon_s": self.horizon,
            "seed": self.seed,
            "abs_tol": self.tol.abs(),
            "rel_tol": self.tol.rel(),
            "filters": self.filters.iter().map(|f| f.label()).collect::<Vec<_>>(),
            "em_step_s": self.em_step,
            "glint": self.glint,
            "threads_env": THREADS_ENV,
        })
    }
}

/// Parses `--filters`: comma-separated `family:variant` tokens.
pub fn parse_filters(list: &str, tol: Tolerances) -> Result<Vec<FilterSpec>, BenchError> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|tok| {
            FilterSpec::parse(tok, tol)
                .map_err(|e| BenchError::config("--filters", format!("bad filter token `{tok}`: {e}")))
        })
        .collect()
}

/// Parses a list of positive numbers: `a,b,c`, or a range `a:b`. Ranges
/// step by decades when `decades` is set (`1e-1:1e-14`), otherwise by one
/// (`1:12`).
pub fn parse_number_list(flag: &str, s: &str, decades: bool) -> Result<Vec<f64>, BenchError> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| BenchError::config(flag, format!("`{t}` is not a number")))
    };
    if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (num(a)?, num(b)?);
        if !(a > 0.0 && b > 0.0) {
            return Err(BenchError::config(flag, "range ends must be positive"));
        }
        if decades {
            let (ea, eb) = (a.log10().round() as i32, b.log10().round() as i32);
            let step = if eb >= ea { 1 } else { -1 };
            let mut out = Vec::new();
            let mut e = ea;
            loop {
                out.push(format!("1e{e}").parse::<f64>().expect("literal"));
                if e == eb {
                    break;
                }
                e += step;
            }
            Ok(out)
        } else {
            if b < a {
                return Err(BenchError::config(flag, "range end is below its start"));
            }
            let count = (b - a).floor() as usize;
            Ok((0..=count).map(|i| a + i as f64).collect())
        }
    } else {
        s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect()
    }
}
