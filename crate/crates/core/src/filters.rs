//! Complete continuous-discrete estimators: a time update over each sampling
//! interval followed by the matching measurement update.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::measurement_update::{
    mu_conventional, mu_ekf_linearized, mu_sqrt_joseph, mu_sqrt_onesweep, MeasurementModel,
};
use crate::models::SimulatedDataset;
use crate::ode::Tolerances;
use crate::sigma_rules::{make_5dckf_rule, make_ukf_rule, SigmaRule, UkfParams};
use crate::time_update::{tu_ekf, tu_ekf_sqrt, GaussianBelief, ProcessModel, SqrtGaussianBelief};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// MDE prediction with the linearized update.
    EkfBaseline,
    /// MDE prediction with the unscented update.
    EkfUkf,
    /// MDE prediction with the fifth-degree cubature update.
    Ekf5dckf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Conventional,
    SrOneSweep,
    SrJoseph,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::EkfBaseline, Family::EkfUkf, Family::Ekf5dckf];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::EkfBaseline => "ekf-baseline",
            Family::EkfUkf => "ekf-ukf",
            Family::Ekf5dckf => "ekf-5dckf",
        }
    }
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Conventional, Variant::SrOneSweep, Variant::SrJoseph];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Conventional => "conventional",
            Variant::SrOneSweep => "sr-onesweep",
            Variant::SrJoseph => "sr-joseph",
        }
    }

    pub fn is_square_root(self) -> bool {
        self != Variant::Conventional
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown filter family `{s}`")))
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown filter variant `{s}`")))
    }
}

/// Which estimator to run and how tightly to integrate the MDEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    family: Family,
    variant: Variant,
    ukf_params: Option<UkfParams>,
    tol: Tolerances,
}

impl FilterSpec {
    /// The baseline family only has a conventional variant.
    pub fn new(family: Family, variant: Variant, tol: Tolerances) -> Result<Self> {
        if family == Family::EkfBaseline && variant != Variant::Conventional {
            return Err(Error::InvalidParameter(format!(
                "{family} has no {variant} variant"
            )));
        }
        Ok(Self {
            family,
            variant,
            ukf_params: None,
            tol,
        })
    }

    /// Overrides the classical `α = 1, β = 0, κ = 3 − n` parametrization.
    pub fn with_ukf_params(mut self, params: UkfParams) -> Self {
        self.ukf_params = Some(params);
        self
    }

    /// Parses `family:variant`; a bare family means `conventional`.
    pub fn parse(token: &str, tol: Tolerances) -> Result<Self> {
        let (fam, var) = match token.split_once(':') {
            Some((f, v)) => (f, v),
            None => (token, Variant::Conventional.as_str()),
        };
        Self::new(fam.trim().parse()?, var.trim().parse()?, tol)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn ukf_params(&self) -> Option<UkfParams> {
        self.ukf_params
    }

    /// `family:variant`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.family, self.variant)
    }

    /// The sigma rule used by the measurement update, if any.
    pub fn rule(&self, n: usize) -> Result<Option<SigmaRule>> {
        match self.family {
            Family::EkfBaseline => Ok(None),
            Family::EkfUkf => {
                let p = self.ukf_params.unwrap_or_else(|| UkfParams::classical(n));
                make_ukf_rule(n, p).map(Some)
            }
            Family::Ekf5dckf => make_5dckf_rule(n).map(Some),
        }
    }

    /// Every valid (family, variant) pair: the baseline plus three variants
    /// of each mixed family.
    pub fn all(tol: Tolerances) -> Vec<FilterSpec> {
        let mut out = vec![Self::new(Family::EkfBaseline, Variant::Conventional, tol).unwrap()];
        for fam in [Family::EkfUkf, Family::Ekf5dckf] {
            for var in Variant::ALL {
                out.push(Self::new(fam, var, tol).unwrap());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    Failed,
}

/// Output of one filter over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    /// `x̂_{k|k}` for every completed step; stops at the first failure.
    pub means: Vec<DVector<f64>>,
    /// One entry per dataset step.
    pub status: Vec<StepStatus>,
    /// Step index (0-based) and cause of the first failure.
    pub failure: Option<(usize, Error)>,
    /// Wall-clock seconds spent in the filtering loop.
    pub wall_s: f64,
}

impl FilterTrace {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

enum State {
    Full(GaussianBelief),
    Sqrt(SqrtGaussianBelief),
}

impl State {
    fn mean(&self) -> &DVector<f64> {
        match self {
            State::Full(b) => &b.mean,
            State::Sqrt(b) => &b.mean,
        }
    }
}

struct Runner<'a, P: ?Sized, M: ?Sized> {
    spec: &'a FilterSpec,
    rule: Option<SigmaRule>,
    process: &'a P,
    meas: &'a M,
}

impl<P, M> Runner<'_, P, M>
where
    P: ProcessModel + ?Sized,
    M: MeasurementModel + ?Sized,
{
    fn step(&self, state: State, t0: f64, t1: f64, k: usize, z: &DVector<f64>) -> Result<State> {
        let tol = &self.spec.tol;
        match state {
            State::Full(b) => {
                let pred = tu_ekf(&b, self.process, t0, t1, tol)?;
                let post = match &self.rule {
                    None => mu_ekf_linearized(&pred, z, k, self.meas)?,
                    Some(rule) => mu_conventional(&pred, z, k, self.meas, rule)?,
                };
                Ok(State::Full(post.posterior))
            }
            State::Sqrt(b) => {
                let pred = tu_ekf_sqrt(&b, self.process, t0, t1, tol)?;
                let rule = self.rule.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("square-root variant without a sigma rule".into())
                })?;
                let post = match self.spec.variant {
                    Variant::SrJoseph => mu_sqrt_joseph(&pred, z, k, self.meas, rule)?,
                    _ => mu_sqrt_onesweep(&pred, z, k, self.meas, rule)?,
                };
                Ok(State::Sqrt(post.posterior))
            }
        }
    }
}

/// Runs `spec` over `dataset` starting from `prior` at `dataset.t0`.
///
/// Numerical failures are recorded in the trace rather than returned: the
/// failing step and every later step are marked [`StepStatus::Failed`].
pub fn run_filter<P, M>(
    spec: &FilterSpec,
    dataset: &SimulatedDataset,
    process: &P,
    meas: &M,
    prior: &GaussianBelief,
) -> FilterTrace
where
    P: ProcessModel + ?Sized,
    M: MeasurementModel + ?Sized,
{
    let k_total = dataset.len();
    let start = Instant::now();
    let mut means = Vec::with_capacity(k_total);
    let mut status = Vec::with_capacity(k_total);

    let init = (|| -> Result<(Option<SigmaRule>, State)> {
        if prior.dim() != process.dim() {
            return Err(Error::DimensionMismatch(format!(
                "prior dimension {}, process dimension {}",
                prior.dim(),
                process.dim()
            )));
        }
        let rule = spec.rule(process.dim())?;
        let state = if spec.variant.is_square_root() {
            State::Sqrt(prior.to_sqrt()?)
        } else {
            State::Full(prior.clone())
        };
        Ok((rule, state))
    })();

    let mut failure = None;
    match init {
        Err(e) => failure = Some((0, e)),
        Ok((rule, mut state)) => {
            let runner = Runner {
                spec,
                rule,
                process,
                meas,
            };
            let mut t = dataset.t0;
            for k in 0..k_total {
                let t1 = dataset.times[k];
                match runner.step(state, t, t1, k + 1, &dataset.measurements[k]) {
                    Ok(next) => {
                        means.push(next.mean().clone());
                        status.push(StepStatus::Ok);
                        state = next;
                        t = t1;
                    }
                    Err(e) => {
                        failure = Some((k, e));
                        break;
                    }
                }
            }
        }
    }
    status.resize(k_total, StepStatus::Failed);

    FilterTrace {
        means,
        status,
        failure,
        wall_s: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::uniform(1e-6).unwrap()
    }

    #[test]
    fn baseline_only_conventional() {
        assert!(FilterSpec::new(Family::EkfBaseline, Variant::SrJoseph, tol()).is_err());
        assert!(FilterSpec::new(Family::EkfBaseline, Variant::Conventional, tol()).is_ok());
        assert_eq!(FilterSpec::all(tol()).len(), 7);
    }

    #[test]
    fn token_parsing() {
        let s = FilterSpec::parse("ekf-5dckf:sr-joseph", tol()).unwrap();
        assert_eq!((s.family(), s.variant()), (Family::Ekf5dckf, Variant::SrJoseph));
        assert_eq!(s.label(), "ekf-5dckf:sr-joseph");
        let s = FilterSpec::parse("ekf-ukf", tol()).unwrap();
        assert_eq!(s.variant(), Variant::Conventional);
        assert!(FilterSpec::parse("kalman:conventional", tol()).is_err());
        assert!(FilterSpec::parse("ekf-ukf:sqrt", tol()).is_err());
    }

    #[test]
    fn rule_selection() {
        let ukf = FilterSpec::parse("ekf-ukf", tol()).unwrap().rule(7).unwrap().unwrap();
        assert_eq!(ukf.len(), 15);
        let ckf = FilterSpec::parse("ekf-5dckf", tol()).unwrap().rule(7).unwrap().unwrap();
        assert_eq!(ckf.len(), 99);
        assert!(FilterSpec::parse("ekf-baseline", tol()).unwrap().rule(7).unwrap().is_none());
    }
}
