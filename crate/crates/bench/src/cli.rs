//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cdkf::models::{simulate_dataset, CoordinatedTurn, IllCondModel, RadarModel};
use cdkf::ode::Tolerances;
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_filters, parse_number_list, Experiment, ExperimentConfig, GlintParams};
use crate::error::BenchError;
use crate::harness::{monte_carlo, sweep_delta, sweep_illcond, MonteCarloTable};
use crate::output::{write_csv, write_manifest, write_svg, SweepAxis};

#[derive(Debug, Parser)]
#[command(name = "cdkf-bench", version, about = "Monte Carlo benchmarks for continuous-discrete filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one dataset and dump it as CSV plus a JSON manifest.
    Simulate(Common),
    /// Run one experiment (gauss, glint, illcond or delta-sweep).
    Run(Common),
    /// Gaussian scenario over a list of sampling periods.
    SweepDelta(Common),
    /// Ill-conditioned sensor over a list of conditioning parameters.
    SweepIllcond(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// gauss, glint, illcond or delta-sweep.
    #[arg(long)]
    experiment: Option<String>,
    /// Sampling period in seconds.
    #[arg(long)]
    delta: Option<f64>,
    /// Sweep values: `a,b,c` or a range `a:b` (sampling periods for
    /// sweep-delta, conditioning parameters by decade otherwise).
    #[arg(long)]
    deltas: Option<String>,
    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integrator tolerance, applied to both the absolute and relative parts.
    #[arg(long)]
    tol: Option<f64>,
    /// Absolute integrator tolerance; overrides --tol.
    #[arg(long)]
    atol: Option<f64>,
    /// Relative integrator tolerance; overrides --tol.
    #[arg(long)]
    rtol: Option<f64>,
    /// Euler–Maruyama step of the truth simulation (s).
    #[arg(long, conflicts_with = "fine_truth_step")]
    em_step: Option<f64>,
    /// Use a 5e-4 s truth step.
    #[arg(long = "paper-exact")]
    fine_truth_step: bool,
    /// Comma-separated `family:variant` tokens.
    #[arg(long)]
    filters: Option<String>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Simulated time span (s).
    #[arg(long)]
    horizon: Option<f64>,
    /// Glint probability for the glint experiment.
    #[arg(long)]
    glint_prob: Option<f64>,
    /// Glint covariance as a multiple of the nominal radar covariance.
    #[arg(long)]
    glint_scale: Option<f64>,
}

fn positive(flag: &str, v: f64) -> Result<f64, BenchError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(BenchError::config(flag, format!("{v} must be positive")))
    }
}

impl Common {
    fn tolerances(&self) -> Result<Tolerances, BenchError> {
        let base = positive("--tol", self.tol.unwrap_or(1e-4))?;
        let abs = positive("--atol", self.atol.unwrap_or(base))?;
        let rel = positive("--rtol", self.rtol.unwrap_or(base))?;
        Tolerances::new(abs, rel).map_err(|e| BenchError::config("--tol", e.to_string()))
    }

    fn config(&self, default_experiment: Experiment) -> Result<ExperimentConfig, BenchError> {
        let experiment = match &self.experiment {
            Some(s) => s.parse()?,
            None => default_experiment,
        };
        let mut cfg = ExperimentConfig::new(experiment);
        cfg.tol = self.tolerances()?;
        cfg.filters = match &self.filters {
            Some(list) => parse_filters(list, cfg.tol)?,
            None => cdkf::filters::FilterSpec::all(cfg.tol),
        };
        if let Some(d) = self.delta {
            cfg.sampling_periods = vec![positive("--delta", d)?];
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = positive("--horizon", h)?;
        }
        if self.fine_truth_step {
            cfg.em_step = 5e-4;
        }
        if let Some(e) = self.em_step {
            cfg.em_step = positive("--em-step", e)?;
        }
        let mut glint = GlintParams::default();
        if let Some(p) = self.glint_prob {
            glint.probability = p;
        }
        if let Some(s) = self.glint_scale {
            glint.scale = s;
        }
        cfg.glint = glint;
        cfg.out_dir = Some(self.out_dir.clone());
        match experiment {
            Experiment::DeltaSweep => {
                let list = self.deltas.as_deref().unwrap_or("1:12");
                cfg.sampling_periods = parse_number_list("--deltas", list, false)?;
            }
            Experiment::Illcond => {
                let list = self.deltas.as_deref().unwrap_or("1e-1:1e-14");
                cfg.ill_deltas = parse_number_list("--deltas", list, true)?;
            }
            _ => {
                if self.deltas.is_some() {
                    return Err(BenchError::config(
                        "--deltas",
                        format!("not used by the {experiment} experiment"),
                    ));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn ensure_dir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

fn print_table(out: &mut dyn Write, table: &MonteCarloTable) {
    let _ = writeln!(
        out,
        "{:<26} {:>8} {:>9} {:>12} {:>12} {:>7} {:>9}",
        "filter", "delta_s", "deltaIll", "armse_p_m", "armse_v_mps", "failed", "cpu_s"
    );
    for r in &table.results {
        let ill = r.delta_ill.map_or("-".to_string(), |d| format!("{d:.0e}"));
        let _ = writeln!(
            out,
            "{:<26} {:>8} {:>9} {:>12.4} {:>12.4} {:>7} {:>9.4}",
            r.label(),
            r.delta_s,
            ill,
            r.armse_p_m,
            r.armse_v_mps,
            r.failed,
            r.cpu_s
        );
    }
}

fn simulate(args: &Common, out: &mut dyn Write) -> Result<(), BenchError> {
    let cfg = args.config(Experiment::Gauss)?;
    let delta = cfg.sampling_periods[0];
    let ct = CoordinatedTurn::new();
    let (m0, p0) = (CoordinatedTurn::initial_mean(), CoordinatedTurn::initial_cov());
    let steps = cfg.steps_for(delta);
    let data = match cfg.experiment {
        Experiment::Glint => {
            let radar = RadarModel::with_glint(cfg.glint.probability, cfg.glint.scale)?;
            simulate_dataset(&ct, &radar, &m0, &p0, delta, steps, cfg.em_step, cfg.seed)?
        }
        Experiment::Illcond => {
            let sensor = IllCondModel::new(cfg.ill_deltas[0])?;
            simulate_dataset(&ct, &sensor, &m0, &p0, delta, steps, cfg.em_step, cfg.seed)?
        }
        _ => simulate_dataset(&ct, &RadarModel::new(), &m0, &p0, delta, steps, cfg.em_step, cfg.seed)?,
    };
    ensure_dir(&args.out_dir)?;
    let csv = args.out_dir.join("dataset.csv");
    let manifest = args.out_dir.join("dataset.json");
    data.save(&csv, &manifest)?;
    let _ = writeln!(out, "wrote {} steps to {}", data.len(), csv.display());
    Ok(())
}

fn run_experiment(args: &Common, default: Experiment, out: &mut dyn Write) -> Result<(), BenchError> {
    let cfg = args.config(default)?;
    ensure_dir(&args.out_dir)?;
    let csv = args.out_dir.join("results.csv");
    let manifest = args.out_dir.join("manifest.json");
    match cfg.experiment {
        Experiment::Illcond => {
            let sweep = sweep_illcond(&cfg)?;
            print_table(out, &sweep.table);
            let _ = writeln!(out, "breakdown (largest failing conditioning parameter):");
            for (label, d) in &sweep.breakdown {
                let shown = d.map_or("none".to_string(), |d| format!("{d:e}"));
                let _ = writeln!(out, "  {label:<26} {shown}");
            }
            for label in &sweep.non_monotone {
                let _ = writeln!(out, "warning: {label} recovers after failing at a larger parameter");
            }
            write_csv(&sweep.table.results, &csv)?;
            write_svg(&sweep.table.results, SweepAxis::Conditioning, &args.out_dir.join("sweep_illcond.svg"))?;
            let summary = serde_json::json!({
                "breakdown": sweep.breakdown,
                "non_monotone": sweep.non_monotone,
            });
            write_manifest(&cfg, &sweep.table, summary, &manifest)?;
        }
        Experiment::DeltaSweep => {
            let table = sweep_delta(&cfg)?;
            print_table(out, &table);
            write_csv(&table.results, &csv)?;
            write_svg(&table.results, SweepAxis::SamplingPeriod, &args.out_dir.join("sweep_delta.svg"))?;
            write_manifest(&cfg, &table, serde_json::Value::Null, &manifest)?;
        }
        _ => {
            let table = monte_carlo(&cfg)?;
            print_table(out, &table);
            write_csv(&table.results, &csv)?;
            write_manifest(&cfg, &table, serde_json::Value::Null, &manifest)?;
        }
    }
    let _ = writeln!(out, "wrote {}", csv.display());
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code: 0 success, 1 configuration error,
/// 2 file-system error.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let text = e.to_string();
                    let line = text.lines().next().unwrap_or("invalid arguments");
                    let _ = writeln!(err, "{line}");
                    1
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Run(a) => run_experiment(a, Experiment::Gauss, out),
        Command::SweepDelta(a) => {
            if a.experiment.as_deref().is_some_and(|e| e != "delta-sweep") {
                Err(BenchError::config("--experiment", "sweep-delta always runs delta-sweep"))
            } else {
                run_experiment(a, Experiment::DeltaSweep, out)
            }
        }
        Command::SweepIllcond(a) => {
            if a.experiment.as_deref().is_some_and(|e| e != "illcond") {
                Err(BenchError::config("--experiment", "sweep-illcond always runs illcond"))
            } else {
                run_experiment(a, Experiment::Illcond, out)
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
