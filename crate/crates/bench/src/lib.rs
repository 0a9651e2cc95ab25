//! Monte Carlo benchmark harness for the `cdkf` filters: ARMSE metrics,
//! failure detection, sampling-period and conditioning sweeps, and
//! CSV / SVG / JSON outputs.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod output;

pub use config::{Experiment, ExperimentConfig, THREADS_ENV};
pub use error::BenchError;
pub use harness::{monte_carlo, sweep_delta, sweep_illcond, IllcondSweep, MonteCarloTable, RunResult};
pub use metrics::{compute_armse, Armse};
