//! Monte Carlo ensemble over the rate parameters.
//!
//! Each run draws `β, φ_r, φ_d` from independent Gaussians, fits the delay
//! weights for that draw and records the relative L² errors of all four
//! compartments. Aggregates are pure functions of the stored run records, so
//! a report can be re-checked from its own contents.
//!
//! Run `k` uses ChaCha8 seeded with the ensemble seed on stream `k`, which
//! makes every run independent of execution order.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibrate::{fit_weights, FitOptions, FitProblem, FitResult, ObjectiveSpec};
use crate::model::{stability_margin_for, BetaSchedule, Compartment, ModelParams, TransmissionMode};
use crate::{Error, Result};

/// Rejections in a row after which sampling gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: u32 = 100;

/// Largest tolerated share of failed runs.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDistributions {
    pub beta_mean: f64,
    pub phi_r_mean: f64,
    pub phi_d_mean: f64,
    /// Standard deviation as a fraction of each mean.
    pub rel_std: f64,
    pub mode: TransmissionMode,
    /// `(days since t0, multiplier)` applied to every sampled `β`.
    pub beta_breakpoints: Vec<(f64, f64)>,
    pub n0: f64,
}

impl ParamDistributions {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("beta_mean", self.beta_mean),
            ("phi_r_mean", self.phi_r_mean),
            ("phi_d_mean", self.phi_d_mean),
            ("n0", self.n0),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(field, "must be finite and > 0"));
            }
        }
        if !self.rel_std.is_finite() || self.rel_std < 0.0 {
            return Err(Error::invalid("rel_std", "must be finite and >= 0"));
        }
        BetaSchedule::new(self.beta_mean, self.beta_breakpoints.clone())?;
        Ok(())
    }

    /// Parameters at the distribution means.
    pub fn means(&self) -> Result<ModelParams> {
        self.build(self.beta_mean, self.phi_r_mean, self.phi_d_mean)
    }

    fn build(&self, beta: f64, phi_r: f64, phi_d: f64) -> Result<ModelParams> {
        ModelParams::new(
            BetaSchedule::new(beta, self.beta_breakpoints.clone())?,
            phi_r,
            phi_d,
            self.n0,
            self.mode,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledParams {
    pub params: ModelParams,
    /// Non-positive draws discarded before acceptance, all parameters.
    pub redraws: u32,
}

fn draw_positive(
    rng: &mut ChaCha8Rng,
    mean: f64,
    rel_std: f64,
    parameter: &'static str,
    redraws: &mut u32,
) -> Result<f64> {
    let normal = Normal::new(mean, rel_std * mean)
        .map_err(|_| Error::invalid(parameter, "invalid distribution"))?;
    for _ in 0..MAX_CONSECUTIVE_REJECTIONS {
        let x = normal.sample(rng);
        if x > 0.0 {
            return Ok(x);
        }
        *redraws += 1;
    }
    Err(Error::SamplingExhausted { parameter })
}

/// Draws one parameter set, determined by `(seed, draw_index)` alone.
pub fn sample_params(dists: &ParamDistributions, draw_index: u64, seed: u64) -> Result<SampledParams> {
    dists.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw_index);
    let mut redraws = 0;
    let beta = draw_positive(&mut rng, dists.beta_mean, dists.rel_std, "beta", &mut redraws)?;
    let phi_r = draw_positive(&mut rng, dists.phi_r_mean, dists.rel_std, "phi_r", &mut redraws)?;
    let phi_d = draw_positive(&mut rng, dists.phi_d_mean, dists.rel_std, "phi_d", &mut redraws)?;
    Ok(SampledParams {
        params: dists.build(beta, phi_r, phi_d)?,
        redraws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentErrors {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl CompartmentErrors {
    pub fn from_array(a: [f64; 4]) -> Self {
        CompartmentErrors {
            s: a[0],
            i: a[1],
            r: a[2],
            d: a[3],
        }
    }

    pub fn get(&self, c: Compartment) -> f64 {
        match c {
            Compartment::S => self.s,
            Compartment::I => self.i,
            Compartment::R => self.r,
            Compartment::D => self.d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSuccess {
    pub fit: FitResult,
    pub errors: CompartmentErrors,
    pub stability_margins: Vec<f64>,
    /// False when any margin is non-positive; the fit is kept regardless.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunOutcome {
    Success(RunSuccess),
    Failure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    pub params: Option<ModelParams>,
    pub redraws: u32,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn success(&self) -> Option<&RunSuccess> {
        match &self.outcome {
            RunOutcome::Success(s) => Some(s),
            RunOutcome::Failure { .. } => None,
        }
    }
}

/// Everything that, together with the data, determines a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub n_runs: u64,
    pub seed: u64,
    pub threshold: f64,
    pub sigmas: Vec<f64>,
    pub spec: ObjectiveSpec,
    pub distributions: ParamDistributions,
    pub fit: FitOptions,
}

impl EnsembleSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold", "must lie in [0, 1]"));
        }
        self.distributions.validate()
    }
}

/// Sample, fit from uniform weights, and score one run. Failures are
/// captured in the record rather than returned.
pub fn run_single(problem: &FitProblem, settings: &EnsembleSettings, index: u64) -> RunRecord {
    let sampled = match sample_params(&settings.distributions, index, settings.seed) {
        Ok(s) => s,
        Err(e) => {
            return RunRecord {
                index,
                params: None,
                redraws: 0,
                outcome: RunOutcome::Failure {
                    message: e.to_string(),
                },
            }
        }
    };
    let outcome = match fit_and_score(problem, &sampled.params, settings) {
        Ok(s) => RunOutcome::Success(s),
        Err(e) => RunOutcome::Failure {
            message: alloc::format!(
                "{e} (beta={}, phi_r={}, phi_d={})",
                sampled.params.beta_schedule.base_beta(),
                sampled.params.phi_r,
                sampled.params.phi_d
            ),
        },
    };
    RunRecord {
        index,
        params: Some(sampled.params),
        redraws: sampled.redraws,
        outcome,
    }
}

pub fn fit_and_score(
    problem: &FitProblem,
    params: &ModelParams,
    settings: &EnsembleSettings,
) -> Result<RunSuccess> {
    let k = problem.sigmas().len();
    let init = alloc::vec![1.0 / k as f64; k];
    let fit = fit_weights(problem, params, &settings.spec, &init, &settings.fit)?;
    let simulated = problem.simulate(params, &fit.weights)?;
    let errors = CompartmentErrors::from_array(problem.compartment_errors(&simulated)?);
    let stability_margins = stability_margin_for(params.phi_r, params.phi_d, problem.sigmas());
    let stable = stability_margins.iter().all(|m| *m > 0.0);
    Ok(RunSuccess {
        fit,
        errors,
        stability_margins,
        stable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAggregates {
    /// Share of successful runs with `w_j ≥ threshold`.
    pub frequency: Vec<f64>,
    /// Mean of `w_j` over successful runs.
    pub mean: Vec<f64>,
    /// Share of successful runs whose largest weight sits at `j`.
    pub argmax_frequency: Vec<f64>,
}

fn successes(runs: &[RunRecord]) -> Vec<&RunSuccess> {
    runs.iter().filter_map(RunRecord::success).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = j;
        }
    }
    best
}

pub fn aggregate_weights(runs: &[RunRecord], threshold: f64) -> Result<WeightAggregates> {
    let ok = successes(runs);
    let Some(first) = ok.first() else {
        return Err(Error::NoSuccessfulRuns);
    };
    let k = first.fit.weights.len();
    let n = ok.len() as f64;
    let mut frequency = alloc::vec![0.0; k];
    let mut mean = alloc::vec![0.0; k];
    let mut argmax_frequency = alloc::vec![0.0; k];
    for run in &ok {
        let w = &run.fit.weights;
        if w.len() != k {
            return Err(Error::LengthMismatch { left: k, right: w.len() });
        }
        for j in 0..k {
            if w[j] >= threshold {
                frequency[j] += 1.0;
            }
            mean[j] += w[j];
        }
        argmax_frequency[argmax(w)] += 1.0;
    }
    for j in 0..k {
        frequency[j] /= n;
        mean[j] /= n;
        argmax_frequency[j] /= n;
    }
    Ok(WeightAggregates {
        frequency,
        mean,
        argmax_frequency,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub s: ErrorStats,
    pub i: ErrorStats,
    pub r: ErrorStats,
    pub d: ErrorStats,
}

impl ErrorTable {
    pub fn get(&self, c: Compartment) -> ErrorStats {
        match c {
            Compartment::S => self.s,
            Compartment::I => self.i,
            Compartment::R => self.r,
            Compartment::D => self.d,
        }
    }
}

pub fn error_table(runs: &[RunRecord]) -> Result<ErrorTable> {
    let ok = successes(runs);
    if ok.is_empty() {
        return Err(Error::NoSuccessfulRuns);
    }
    let stats = |c: Compartment| {
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for run in &ok {
            let e = run.errors.get(c);
            sum += e;
            min = min.min(e);
            max = max.max(e);
        }
        ErrorStats {
            mean: sum / ok.len() as f64,
            min,
            max,
        }
    };
    Ok(ErrorTable {
        s: stats(Compartment::S),
        i: stats(Compartment::I),
        r: stats(Compartment::R),
        d: stats(Compartment::D),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub settings: EnsembleSettings,
    pub runs: Vec<RunRecord>,
    pub weight_mean: Vec<f64>,
    pub weight_frequency: Vec<f64>,
    pub argmax_frequency: Vec<f64>,
    pub error_stats: ErrorTable,
    pub successful_runs: usize,
    pub failed_runs: usize,
    /// Successful runs whose draw violates the stability bound for some lag.
    pub unstable_runs: usize,
    pub unconverged_runs: usize,
}

impl EnsembleReport {
    /// Lag with the largest weight frequency (first on ties).
    pub fn dominant_sigma_by_frequency(&self) -> f64 {
        self.settings.sigmas[argmax(&self.weight_frequency)]
    }

    pub fn dominant_sigma_by_mean(&self) -> f64 {
        self.settings.sigmas[argmax(&self.weight_mean)]
    }
}

/// Aggregates stored runs (in index order) into a report.
pub fn assemble_report(settings: EnsembleSettings, mut runs: Vec<RunRecord>) -> Result<EnsembleReport> {
    runs.sort_by_key(|r| r.index);
    let total = runs.len();
    let failed_runs = runs.iter().filter(|r| r.success().is_none()).count();
    if total == 0 || failed_runs as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed: failed_runs,
            total,
        });
    }
    let weights = aggregate_weights(&runs, settings.threshold)?;
    let error_stats = error_table(&runs)?;
    let ok = successes(&runs);
    let unstable_runs = ok.iter().filter(|s| !s.stable).count();
    let unconverged_runs = ok.iter().filter(|s| !s.fit.converged).count();
    let successful_runs = ok.len();
    Ok(EnsembleReport {
        settings,
        runs,
        weight_mean: weights.mean,
        weight_frequency: weights.frequency,
        argmax_frequency: weights.argmax_frequency,
        error_stats,
        successful_runs,
        failed_runs,
        unstable_runs,
        unconverged_runs,
    })
}

/// Sequential ensemble; the std companion crate provides a parallel driver
/// producing identical reports.
pub fn run_ensemble(problem: &FitProblem, settings: &EnsembleSettings) -> Result<EnsembleReport> {
    settings.validate()?;
    let runs = (0..settings.n_runs)
        .map(|k| run_single(problem, settings, k))
        .collect();
    assemble_report(settings.clone(), runs)
}

/// Names of the stored aggregates that differ from a recomputation over
/// the stored runs; empty for an intact report.
pub fn verify_report(report: &EnsembleReport) -> Vec<&'static str> {
    let mut bad = Vec::new();
    match assemble_report(report.settings.clone(), report.runs.clone()) {
        Ok(fresh) => {
            let checks: [(&'static str, bool); 8] = [
                ("weight_mean", fresh.weight_mean == report.weight_mean),
                ("weight_frequency", fresh.weight_frequency == report.weight_frequency),
                ("argmax_frequency", fresh.argmax_frequency == report.argmax_frequency),
                ("error_stats", fresh.error_stats == report.error_stats),
                ("successful_runs", fresh.successful_runs == report.successful_runs),
                ("failed_runs", fresh.failed_runs == report.failed_runs),
                ("unstable_runs", fresh.unstable_runs == report.unstable_runs),
                ("unconverged_runs", fresh.unconverged_runs == report.unconverged_runs),
            ];
            bad.extend(checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n));
        }
        Err(_) => bad.push("runs"),
    }
    if report.runs.len() as u64 != report.settings.n_runs {
        bad.push("n_runs");
    }
    bad
}
