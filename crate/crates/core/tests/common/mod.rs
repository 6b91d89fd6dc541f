#![allow(dead_code)]

use chrono::NaiveDate;
use delayfit_core::calibrate::FitProblem;
use delayfit_core::dde::{LinearHistory, SolverConfig};
use delayfit_core::model::{uniform_lag_grid, BetaSchedule, ModelParams, TransmissionMode};

pub const N0: f64 = 60_244_639.0;
pub const BETA: f64 = 0.1131;
pub const PHI_R: f64 = 1.0 / 24.0;
pub const PHI_D: f64 = 1.0 / 940.0;
pub const FIT_DAYS: usize = 150;

pub fn lag_grid() -> Vec<f64> {
    uniform_lag_grid(2.0, 35.0, 12).unwrap()
}

pub fn mean_params() -> ModelParams {
    ModelParams::new(
        BetaSchedule::new(BETA, vec![(73.0, 1.0 / 3.0)]).unwrap(),
        PHI_R,
        PHI_D,
        N0,
        TransmissionMode::Frequency,
    )
    .unwrap()
}

/// Smooth late-summer-like history on `[-history_days, 0]`: slowly growing
/// active cases with cumulative recoveries and deaths to match.
pub fn synthetic_history(history_days: usize) -> LinearHistory<4> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..=history_days {
        let t = k as f64 - history_days as f64;
        let i = 40_000.0 * (0.03 * t).exp();
        let r = 210_000.0 + PHI_R * 40_000.0 / 0.03 * ((0.03 * t).exp() - 1.0);
        let d = 35_500.0 + PHI_D * 40_000.0 / 0.03 * ((0.03 * t).exp() - 1.0);
        times.push(t);
        values.push([N0 - i - r - d, i, r, d]);
    }
    LinearHistory::new(times, values).unwrap()
}

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 9, 11).unwrap()
}

/// Problem whose measurements are the model's own output under `weights`.
pub fn planted_problem(sigmas: Vec<f64>, weights: &[f64]) -> FitProblem {
    let history = synthetic_history(sigmas[sigmas.len() - 1].ceil() as usize);
    let placeholder = vec![[0.0; 4]; FIT_DAYS];
    let pb = FitProblem::from_parts(sigmas, history, placeholder, start_date(), SolverConfig::default()).unwrap();
    let measured = pb.simulate(&mean_params(), weights).unwrap();
    pb.with_measured(measured).unwrap()
}
