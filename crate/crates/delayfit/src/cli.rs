//! Command-line surface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or file
//! error, 4 solver or ensemble failure, 5 fit did not converge (outputs are
//! still written), 6 report integrity failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use delayfit_core::calibrate::{fit_weights, solve_window, FitProblem};
use delayfit_core::dde::LinearHistory;
use delayfit_core::ensemble::{assemble_report, verify_report, CompartmentErrors};
use delayfit_core::model::stability_margin_for;

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::data::{load_csv, DataError};
use crate::fmt::{num, short};
use crate::report::{self, FitDocument, ReportError};
use crate::runner::run_parallel;

#[derive(Debug, Parser)]
#[command(name = "delayfit", version, about = "Identify infection-report delays with a delayed SIRD model")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub n_runs: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model with the configured kernel and write trajectory.csv.
    Simulate,
    /// Fit the delay weights at the parameter means; writes fit.json and weights.csv.
    Fit,
    /// Monte Carlo ensemble of fits; writes report.json and CSV aggregates.
    Ensemble,
    /// Verify a stored report and regenerate its aggregates and summary.
    Report {
        /// Path to a report.json written by `ensemble`.
        path: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Solver(String),
    #[error("fit did not converge: KKT residual {kkt} after {iterations} iterations")]
    NotConverged { kkt: f64, iterations: usize },
    #[error("report integrity check failed; stored values differ from recomputation: {}", .0.join(", "))]
    Integrity(Vec<&'static str>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
            CliError::NotConverged { .. } => 5,
            CliError::Integrity(_) => 6,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn data_err(e: delayfit_core::Error) -> CliError {
    CliError::Data(e.to_string())
}

fn solver_err(e: delayfit_core::Error) -> CliError {
    CliError::Solver(e.to_string())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Report { path } => cmd_report(&path, cli.global.out_dir.as_deref()),
        Command::Simulate => cmd_simulate(&load_config(&cli.global)?),
        Command::Fit => cmd_fit(&load_config(&cli.global)?),
        Command::Ensemble => cmd_ensemble(&load_config(&cli.global)?),
    }
}

/// File config (or defaults), flag overrides, then validation.
pub fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: global.seed,
        n_runs: global.n_runs,
        workers: global.workers,
        out_dir: global.out_dir.clone(),
    });
    Ok(cfg.resolve()?)
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    cfg.write_resolved(dir)?;
    Ok(dir)
}

fn require_data(cfg: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    cfg.data
        .clone()
        .ok_or_else(|| CliError::Usage(format!("config.data: required by `{command}`")))
}

fn problem(cfg: &RunConfig, data: &Path) -> Result<FitProblem, CliError> {
    let series = load_csv(data, cfg.n0)?;
    FitProblem::new(&series, &cfg.window(), cfg.lags(), cfg.solver()).map_err(data_err)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let weights = cfg
        .weights
        .clone()
        .ok_or_else(|| CliError::Usage("config.weights: required by `simulate`".into()))?;
    let params = cfg.params()?;
    let lags = cfg.lags();
    let (start, simulated, measured) = match &cfg.data {
        Some(data) => {
            let pb = problem(cfg, data)?;
            let sim = pb.simulate(&params, &weights).map_err(solver_err)?;
            (pb.start(), sim, Some(pb.measured().to_vec()))
        }
        None => {
            let state = cfg.initial_state.ok_or_else(|| {
                CliError::Usage("config.initial_state: required by `simulate` without data".into())
            })?;
            let h = cfg.history_days.unwrap_or(0) as f64;
            let history = LinearHistory::new(vec![-h, 0.0], vec![state, state]).map_err(data_err)?;
            let t_end = (cfg.days - 1) as f64;
            let traj = solve_window(&params, &weights, &lags, history, t_end, &cfg.solver()).map_err(solver_err)?;
            let sim = (0..cfg.days)
                .map(|d| traj.eval(d as f64))
                .collect::<Result<Vec<_>, _>>()
                .map_err(solver_err)?;
            (cfg.start, sim, None)
        }
    };
    let dir = prepare_out_dir(cfg)?;
    let path = dir.join(report::TRAJECTORY_NAME);
    report::write_trajectory(&path, start, &simulated, measured.as_deref())?;
    println!("wrote {} ({} days)", path.display(), simulated.len());
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let data = require_data(cfg, "fit")?;
    let pb = problem(cfg, &data)?;
    let params = cfg.params()?;
    let spec = cfg.objective(pb.n_days())?;
    let k = pb.sigmas().len();
    let init = vec![1.0 / k as f64; k];
    let fit = fit_weights(&pb, &params, &spec, &init, &cfg.fit_options()).map_err(solver_err)?;
    let sim = pb.simulate(&params, &fit.weights).map_err(solver_err)?;
    let errors = CompartmentErrors::from_array(pb.compartment_errors(&sim).map_err(data_err)?);
    let stability_margins = stability_margin_for(params.phi_r, params.phi_d, pb.sigmas());
    let stable = stability_margins.iter().all(|m| *m > 0.0);
    let doc = FitDocument {
        sigmas: pb.sigmas().to_vec(),
        params,
        fit,
        errors,
        stability_margins,
        stable,
    };

    let dir = prepare_out_dir(cfg)?;
    report::write_json(&dir.join(report::FIT_NAME), &doc)?;
    report::write_sigma_table(&dir.join(report::WEIGHTS_NAME), "weight", &doc.sigmas, &doc.fit.weights)?;
    println!(
        "objective {} after {} iterations, KKT residual {}",
        num(doc.fit.objective_value),
        doc.fit.iterations,
        num(doc.fit.kkt_residual)
    );
    println!(
        "relative L2 errors: s {} i {} r {} d {}",
        short(errors.s),
        short(errors.i),
        short(errors.r),
        short(errors.d)
    );
    if !stable {
        log::warn!("parameters violate the delay stability bound for some lags");
    }
    if doc.fit.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged {
            kkt: doc.fit.kkt_residual,
            iterations: doc.fit.iterations,
        })
    }
}

pub fn cmd_ensemble(cfg: &RunConfig) -> Result<(), CliError> {
    let data = require_data(cfg, "ensemble")?;
    let pb = problem(cfg, &data)?;
    let settings = cfg.ensemble_settings(pb.n_days())?;
    let report = run_parallel(&pb, &settings, cfg.workers).map_err(solver_err)?;
    let dir = prepare_out_dir(cfg)?;
    report::write_ensemble_outputs(dir, &report)?;
    if report.unconverged_runs > 0 {
        log::warn!("{} runs stopped before meeting the KKT tolerance", report.unconverged_runs);
    }
    print!("{}", report::summary(&report));
    Ok(())
}

pub fn cmd_report(path: &Path, out_dir: Option<&Path>) -> Result<(), CliError> {
    let stored = report::read_report(path)?;
    let bad = verify_report(&stored);
    if !bad.is_empty() {
        return Err(CliError::Integrity(bad));
    }
    let fresh = assemble_report(stored.settings.clone(), stored.runs.clone()).map_err(solver_err)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    report::write_aggregates(&dir, &fresh)?;
    print!("{}", report::summary(&fresh));
    Ok(())
}
