//! Output documents: JSON reports and plot-ready CSV files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use delayfit_core::calibrate::FitResult;
use delayfit_core::ensemble::{CompartmentErrors, EnsembleReport, ErrorTable};
use delayfit_core::model::{Compartment, ModelParams};

use crate::fmt::{num, short};

pub const REPORT_NAME: &str = "report.json";
pub const WEIGHTS_MEAN_NAME: &str = "weights_mean.csv";
pub const WEIGHTS_FREQUENCY_NAME: &str = "weights_frequency.csv";
pub const WEIGHTS_ARGMAX_NAME: &str = "weights_argmax.csv";
pub const ERROR_TABLE_NAME: &str = "error_table.csv";
pub const SUMMARY_NAME: &str = "summary.txt";
pub const TRAJECTORY_NAME: &str = "trajectory.csv";
pub const FIT_NAME: &str = "fit.json";
pub const WEIGHTS_NAME: &str = "weights.csv";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a valid report: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Single-fit document written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub sigmas: Vec<f64>,
    pub params: ModelParams,
    pub fit: FitResult,
    /// Relative L² errors over the fitting window.
    pub errors: CompartmentErrors,
    pub stability_margins: Vec<f64>,
    pub stable: bool,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_report(path: &Path) -> Result<EnsembleReport, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Two-column `sigma,<name>` table.
pub fn write_sigma_table(path: &Path, name: &str, sigmas: &[f64], values: &[f64]) -> Result<(), ReportError> {
    let mut text = format!("sigma,{name}\n");
    for (s, v) in sigmas.iter().zip(values) {
        let _ = writeln!(text, "{},{}", num(*s), num(*v));
    }
    write_text(path, &text)
}

pub fn write_error_table(path: &Path, table: &ErrorTable) -> Result<(), ReportError> {
    let mut text = String::from("compartment,mean,min,max\n");
    for c in Compartment::ALL {
        let e = table.get(c);
        let _ = writeln!(text, "{},{},{},{}", c.name(), num(e.mean), num(e.min), num(e.max));
    }
    write_text(path, &text)
}

/// Writes the JSON report, the CSV aggregates and the summary into `dir`.
pub fn write_ensemble_outputs(dir: &Path, report: &EnsembleReport) -> Result<(), ReportError> {
    write_json(&dir.join(REPORT_NAME), report)?;
    write_aggregates(dir, report)
}

/// CSV aggregates and summary only, as regenerated by `report`.
pub fn write_aggregates(dir: &Path, report: &EnsembleReport) -> Result<(), ReportError> {
    let sigmas = &report.settings.sigmas;
    write_sigma_table(&dir.join(WEIGHTS_MEAN_NAME), "mean_weight", sigmas, &report.weight_mean)?;
    write_sigma_table(&dir.join(WEIGHTS_FREQUENCY_NAME), "frequency", sigmas, &report.weight_frequency)?;
    write_sigma_table(&dir.join(WEIGHTS_ARGMAX_NAME), "argmax_frequency", sigmas, &report.argmax_frequency)?;
    write_error_table(&dir.join(ERROR_TABLE_NAME), &report.error_stats)?;
    write_text(&dir.join(SUMMARY_NAME), &summary(report))
}

pub fn error_table_text(table: &ErrorTable) -> String {
    let mut out = String::from("compartment      mean       min       max\n");
    for c in Compartment::ALL {
        let e = table.get(c);
        let _ = writeln!(
            out,
            "{:<11} {:>9} {:>9} {:>9}",
            c.name(),
            short(e.mean),
            short(e.min),
            short(e.max)
        );
    }
    out
}

pub fn summary(report: &EnsembleReport) -> String {
    let s = &report.settings;
    let mut out = String::new();
    let comps: Vec<&str> = s.spec.compartments().iter().map(|c| c.name()).collect();
    let _ = writeln!(out, "objective compartments: {}", comps.join(","));
    let _ = writeln!(
        out,
        "runs: {} requested, {} successful, {} failed, {} unconverged, {} unstable",
        s.n_runs, report.successful_runs, report.failed_runs, report.unconverged_runs, report.unstable_runs
    );
    let _ = writeln!(out, "seed: {}, activation threshold: {}", s.seed, num(s.threshold));
    let _ = writeln!(
        out,
        "dominant sigma: {} by frequency, {} by mean weight",
        num(report.dominant_sigma_by_frequency()),
        num(report.dominant_sigma_by_mean())
    );
    out.push('\n');
    out.push_str("   sigma  frequency  mean_weight  argmax_share\n");
    for (j, sigma) in s.sigmas.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>8} {:>10} {:>12} {:>13}",
            num(*sigma),
            short(report.weight_frequency[j]),
            short(report.weight_mean[j]),
            short(report.argmax_frequency[j])
        );
    }
    out.push('\n');
    out.push_str("relative L2 errors\n");
    out.push_str(&error_table_text(&report.error_stats));
    out
}

/// Daily trajectory, with measured values and residuals when available.
pub fn write_trajectory(
    path: &Path,
    start: NaiveDate,
    simulated: &[[f64; 4]],
    measured: Option<&[[f64; 4]]>,
) -> Result<(), ReportError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("day,date,s,i,r,d");
    if measured.is_some() {
        header.push_str(",data_s,data_i,data_r,data_d,res_s,res_i,res_r,res_d");
    }
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{header}")?;
        for (day, sim) in simulated.iter().enumerate() {
            let date = start + Days::new(day as u64);
            write!(w, "{day},{date},{},{},{},{}", num(sim[0]), num(sim[1]), num(sim[2]), num(sim[3]))?;
            if let Some(m) = measured.map(|m| m[day]) {
                write!(w, ",{},{},{},{}", num(m[0]), num(m[1]), num(m[2]), num(m[3]))?;
                write!(
                    w,
                    ",{},{},{},{}",
                    num(sim[0] - m[0]),
                    num(sim[1] - m[1]),
                    num(sim[2] - m[2]),
                    num(sim[3] - m[3])
                )?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}
