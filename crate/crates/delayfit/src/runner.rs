//! Parallel ensemble driver.
//!
//! Runs are scheduled on a dedicated pool of `workers` threads. Each run
//! depends only on `(seed, index)` and the results are collected in index
//! order, so the report does not depend on the worker count.

use rayon::prelude::*;

use delayfit_core::calibrate::FitProblem;
use delayfit_core::ensemble::{assemble_report, run_single, EnsembleReport, EnsembleSettings, RunRecord};
use delayfit_core::Result;

pub fn run_parallel(problem: &FitProblem, settings: &EnsembleSettings, workers: usize) -> Result<EnsembleReport> {
    settings.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let runs: Vec<RunRecord> = pool.install(|| {
        (0..settings.n_runs)
            .into_par_iter()
            .map(|index| {
                let rec = run_single(problem, settings, index);
                if let Some(reason) = failure(&rec) {
                    log::warn!("run {index} failed: {reason}");
                } else {
                    log::debug!("run {index} done");
                }
                rec
            })
            .collect()
    });
    assemble_report(settings.clone(), runs)
}

fn failure(rec: &RunRecord) -> Option<&str> {
    match &rec.outcome {
        delayfit_core::ensemble::RunOutcome::Failure { message } => Some(message),
        _ => None,
    }
}
