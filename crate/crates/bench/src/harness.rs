//! Monte Carlo driver: simulate one dataset per run, feed it to every filter,
//! aggregate ARMSE per (filter, configuration) cell.

use std::collections::BTreeMap;

use cdkf::filters::{run_filter, FilterSpec};
use cdkf::measurement_update::MeasurementModel;
use cdkf::models::{simulate_dataset, CoordinatedTurn, IllCondModel, RadarModel, SimulatedDataset};
use cdkf::time_update::GaussianBelief;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig, FAILURE_THRESHOLD_M, THREADS_ENV};
use crate::error::BenchError;
use crate::metrics::{Armse, ErrorSums};

/// One aggregated cell of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment: String,
    pub filter: String,
    pub variant: String,
    pub delta_s: f64,
    #[serde(rename = "deltaIll")]
    pub delta_ill: Option<f64>,
    pub runs: usize,
    pub seed: u64,
    pub tol: f64,
    pub armse_p_m: f64,
    pub armse_v_mps: f64,
    pub failed: bool,
    /// Mean wall-clock seconds of the filtering loop per run.
    pub cpu_s: f64,
}

impl RunResult {
    pub fn label(&self) -> String {
        format!("{}:{}", self.filter, self.variant)
    }
}

/// Results plus the dataset digest of every (cell, run), in table order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonteCarloTable {
    pub results: Vec<RunResult>,
    pub digests: Vec<Vec<String>>,
}

impl MonteCarloTable {
    fn extend(&mut self, other: MonteCarloTable) {
        self.results.extend(other.results);
        self.digests.extend(other.digests);
    }
}

/// SHA-256 over the sampling instants, truth and measurements.
pub fn dataset_digest(data: &SimulatedDataset) -> String {
    let mut h = Sha256::new();
    h.update(data.seed.to_le_bytes());
    for v in data.initial_state.iter() {
        h.update(v.to_le_bytes());
    }
    for k in 0..data.len() {
        h.update(data.times[k].to_le_bytes());
        for v in data.truth[k].iter().chain(data.measurements[k].iter()) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Thread pool honouring [`THREADS_ENV`].
pub fn thread_pool() -> Result<rayon::ThreadPool, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| BenchError::config(THREADS_ENV, format!("`{v}` is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| BenchError::config(THREADS_ENV, e.to_string()))
}

fn measurement_model(
    cfg: &ExperimentConfig,
    ill_delta: Option<f64>,
) -> Result<Box<dyn MeasurementModel>, BenchError> {
    Ok(match (cfg.experiment, ill_delta) {
        (_, Some(d)) => Box::new(IllCondModel::new(d)?),
        (Experiment::Glint, None) => {
            Box::new(RadarModel::with_glint(cfg.glint.probability, cfg.glint.scale)?)
        }
        _ => Box::new(RadarModel::new()),
    })
}

struct RunOutcome {
    digest: String,
    sums: Vec<ErrorSums>,
    wall: Vec<f64>,
}

/// Evaluates every filter of `cfg` at one (Δ, δ) point.
pub fn evaluate_cell(
    cfg: &ExperimentConfig,
    delta: f64,
    ill_delta: Option<f64>,
    pool: &rayon::ThreadPool,
) -> Result<MonteCarloTable, BenchError> {
    let process = CoordinatedTurn::new();
    let meas = measurement_model(cfg, ill_delta)?;
    let mean0 = CoordinatedTurn::initial_mean();
    let cov0 = CoordinatedTurn::initial_cov();
    let prior = GaussianBelief::new(mean0.clone(), cov0.clone())?;
    let steps = cfg.steps_for(delta);

    let outcomes: Vec<RunOutcome> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.seed.wrapping_add(r as u64);
                let data = simulate_dataset(
                    &process, meas.as_ref(), &mean0, &cov0, delta, steps, cfg.em_step, seed,
                )?;
                let digest = dataset_digest(&data);
                let mut sums = Vec::with_capacity(cfg.filters.len());
                let mut wall = Vec::with_capacity(cfg.filters.len());
                for spec in &cfg.filters {
                    let trace = run_filter(spec, &data, &process, meas.as_ref(), &prior);
                    sums.push(ErrorSums::from_trace(&trace, &data.truth)?);
                    wall.push(trace.wall_s);
                }
                Ok(RunOutcome { digest, sums, wall })
            })
            .collect::<Result<Vec<_>, BenchError>>()
    })?;

    let digests: Vec<String> = outcomes.iter().map(|o| o.digest.clone()).collect();
    let mut table = MonteCarloTable::default();
    for (i, spec) in cfg.filters.iter().enumerate() {
        let sums: Vec<ErrorSums> = outcomes.iter().map(|o| o.sums[i]).collect();
        let armse = Armse::from_sums(&sums);
        let cpu = outcomes.iter().map(|o| o.wall[i]).sum::<f64>() / cfg.runs as f64;
        table.results.push(cell_result(cfg, spec, delta, ill_delta, armse, cpu));
        table.digests.push(digests.clone());
    }
    Ok(table)
}

fn cell_result(
    cfg: &ExperimentConfig,
    spec: &FilterSpec,
    delta: f64,
    ill_delta: Option<f64>,
    armse: Armse,
    cpu_s: f64,
) -> RunResult {
    RunResult {
        experiment: cfg.experiment.to_string(),
        filter: spec.family().to_string(),
        variant: spec.variant().to_string(),
        delta_s: delta,
        delta_ill: ill_delta,
        runs: cfg.runs,
        seed: cfg.seed,
        tol: cfg.tol.rel(),
        armse_p_m: armse.position,
        armse_v_mps: armse.velocity,
        failed: armse.any_run_failed || !(armse.position <= FAILURE_THRESHOLD_M),
        cpu_s,
    }
}

/// Runs the experiment described by `cfg`: one cell per sampling period,
/// or one per conditioning parameter for the ill-conditioned sensor.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloTable, BenchError> {
    cfg.validate()?;
    let pool = thread_pool()?;
    let mut table = MonteCarloTable::default();
    if cfg.experiment == Experiment::Illcond {
        let delta = cfg.sampling_periods[0];
        for &d in &cfg.ill_deltas {
            table.extend(evaluate_cell(cfg, delta, Some(d), &pool)?);
        }
    } else {
        for &delta in &cfg.sampling_periods {
            table.extend(evaluate_cell(cfg, delta, None, &pool)?);
        }
    }
    Ok(table)
}

/// Gaussian scenario over every sampling period in `cfg`.
pub fn sweep_delta(cfg: &ExperimentConfig) -> Result<MonteCarloTable, BenchError> {
    let mut cfg = cfg.clone();
    cfg.experiment = Experiment::DeltaSweep;
    monte_carlo(&cfg)
}

/// Outcome of a conditioning sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct IllcondSweep {
    pub table: MonteCarloTable,
    /// Largest δ at which each filter failed, keyed by `family:variant`.
    pub breakdown: BTreeMap<String, Option<f64>>,
    /// Filters that recovered at a smaller δ after failing at a larger one.
    pub non_monotone: Vec<String>,
}

/// Ill-conditioned sensor over every δ in `cfg.ill_deltas`.
pub fn sweep_illcond(cfg: &ExperimentConfig) -> Result<IllcondSweep, BenchError> {
    let mut cfg = cfg.clone();
    cfg.experiment = Experiment::Illcond;
    let table = monte_carlo(&cfg)?;
    let (breakdown, non_monotone) = breakdown_summary(&table.results);
    Ok(IllcondSweep {
        table,
        breakdown,
        non_monotone,
    })
}

/// Breakdown δ per filter and the list of filters whose failures are not
/// monotone in δ. Rows are assumed in decreasing-δ order per filter.
pub fn breakdown_summary(results: &[RunResult]) -> (BTreeMap<String, Option<f64>>, Vec<String>) {
    let mut by_filter: BTreeMap<String, Vec<(f64, bool)>> = BTreeMap::new();
    for r in results {
        if let Some(d) = r.delta_ill {
            by_filter.entry(r.label()).or_default().push((d, r.failed));
        }
    }
    let mut breakdown = BTreeMap::new();
    let mut non_monotone = Vec::new();
    for (label, mut rows) in by_filter {
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let first_fail = rows.iter().position(|&(_, f)| f);
        if let Some(i) = first_fail {
            if rows[i..].iter().any(|&(_, f)| !f) {
                non_monotone.push(label.clone());
            }
        }
        breakdown.insert(label, first_fail.map(|i| rows[i].0));
    }
    (breakdown, non_monotone)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: (&str, &str), d: f64, failed: bool) -> RunResult {
        RunResult {
            experiment: "illcond".into(),
            filter: label.0.into(),
            variant: label.1.into(),
            delta_s: 1.0,
            delta_ill: Some(d),
            runs: 1,
            seed: 0,
            tol: 1e-4,
            armse_p_m: 1.0,
            armse_v_mps: 1.0,
            failed,
            cpu_s: 0.0,
        }
    }

    #[test]
    fn breakdown_is_largest_failing_delta() {
        let f = ("ekf-ukf", "conventional");
        let g = ("ekf-ukf", "sr-joseph");
        let rows = vec![
            row(f, 1e-1, false),
            row(f, 1e-2, true),
            row(f, 1e-3, true),
            row(g, 1e-1, false),
            row(g, 1e-2, false),
            row(g, 1e-3, false),
        ];
        let (b, nm) = breakdown_summary(&rows);
        assert_eq!(b["ekf-ukf:conventional"], Some(1e-2));
        assert_eq!(b["ekf-ukf:sr-joseph"], None);
        assert!(nm.is_empty());
    }

    #[test]
    fn recovery_is_flagged() {
        let f = ("ekf-5dckf", "conventional");
        let rows = vec![row(f, 1e-1, true), row(f, 1e-2, false)];
        let (_, nm) = breakdown_summary(&rows);
        assert_eq!(nm, vec!["ekf-5dckf:conventional".to_string()]);
    }
}
