//! Continuous-discrete nonlinear filtering.
//!
//! Predictions integrate the EKF moment differential equations (or their
//! Cholesky-factor form) with an adaptive Dormand–Prince solver; updates use
//! the unscented or fifth-degree cubature rule, in conventional form or in
//! square-root form built on J-orthogonal (hyperbolic) QR.
//!
//! ```no_run
//! use cdkf::filters::{run_filter, FilterSpec};
//! use cdkf::models::{simulate_dataset, CoordinatedTurn, RadarModel};
//! use cdkf::ode::Tolerances;
//! use cdkf::time_update::GaussianBelief;
//!
//! let ct = CoordinatedTurn::new();
//! let radar = RadarModel::new();
//! let (m0, p0) = (CoordinatedTurn::initial_mean(), CoordinatedTurn::initial_cov());
//! let data = simulate_dataset(&ct, &radar, &m0, &p0, 1.0, 150, 1e-3, 42).unwrap();
//! let spec = FilterSpec::parse("ekf-5dckf:sr-joseph", Tolerances::uniform(1e-4).unwrap()).unwrap();
//! let trace = run_filter(&spec, &data, &ct, &radar, &GaussianBelief::new(m0, p0).unwrap());
//! assert!(!trace.failed());
//! ```

pub mod error;
pub mod filters;
pub mod linalg;
pub mod measurement_update;
pub mod models;
pub mod ode;
pub mod sigma_rules;
pub mod time_update;

pub use error::{Error, Result};
