//! Accumulated root-mean-square errors over Monte Carlo runs.

use cdkf::filters::FilterTrace;
use nalgebra::DVector;

use crate::error::BenchError;

const POSITION: [usize; 3] = [0, 2, 4];
const VELOCITY: [usize; 3] = [1, 3, 5];

/// Squared-error sums of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorSums {
    pub position: f64,
    pub velocity: f64,
    pub steps: usize,
    pub failed: bool,
}

impl ErrorSums {
    pub fn from_trace(trace: &FilterTrace, truth: &[DVector<f64>]) -> Result<Self, BenchError> {
        if trace.failed() {
            return Ok(Self {
                steps: truth.len(),
                failed: true,
                ..Self::default()
            });
        }
        Self::from_estimates(&trace.means, truth)
    }

    pub fn from_estimates(est: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<Self, BenchError> {
        if est.len() != truth.len() {
            return Err(cdkf::Error::LengthMismatch {
                expected: truth.len(),
                actual: est.len(),
            }
            .into());
        }
        let mut out = Self {
            steps: truth.len(),
            ..Self::default()
        };
        for (x_hat, x) in est.iter().zip(truth) {
            if x_hat.len() < 6 || x.len() < 6 {
                return Err(cdkf::Error::LengthMismatch {
                    expected: 6,
                    actual: x_hat.len().min(x.len()),
                }
                .into());
            }
            out.position += POSITION.iter().map(|&i| (x[i] - x_hat[i]).powi(2)).sum::<f64>();
            out.velocity += VELOCITY.iter().map(|&i| (x[i] - x_hat[i]).powi(2)).sum::<f64>();
        }
        Ok(out)
    }
}

/// `(ARMSE_p, ARMSE_v)`; both are `+∞` when any run failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Armse {
    pub position: f64,
    pub velocity: f64,
    pub any_run_failed: bool,
}

impl Armse {
    pub fn from_sums(sums: &[ErrorSums]) -> Self {
        if sums.iter().any(|s| s.failed) {
            return Self {
                position: f64::INFINITY,
                velocity: f64::INFINITY,
                any_run_failed: true,
            };
        }
        let total: usize = sums.iter().map(|s| s.steps).sum();
        let denom = total.max(1) as f64;
        Self {
            position: (sums.iter().map(|s| s.position).sum::<f64>() / denom).sqrt(),
            velocity: (sums.iter().map(|s| s.velocity).sum::<f64>() / denom).sqrt(),
            any_run_failed: false,
        }
    }
}

/// ARMSE over `M` traces against their truth trajectories.
pub fn compute_armse(
    traces: &[FilterTrace],
    truths: &[&[DVector<f64>]],
) -> Result<Armse, BenchError> {
    if traces.len() != truths.len() {
        return Err(cdkf::Error::LengthMismatch {
            expected: truths.len(),
            actual: traces.len(),
        }
        .into());
    }
    let sums = traces
        .iter()
        .zip(truths)
        .map(|(t, x)| ErrorSums::from_trace(t, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Armse::from_sums(&sums))
}
