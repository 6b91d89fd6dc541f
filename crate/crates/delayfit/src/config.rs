//! Run configuration: a flat TOML document with command-line overrides.
//!
//! Every key has a default reproducing the reference Italy setup, so a file
//! naming only `data` is complete. [`RunConfig::resolve`] fills derived
//! values (explicit lag list, history length, absolute paths); the resolved
//! document is written next to every run's outputs and reproduces the run
//! when fed back in.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use delayfit_core::calibrate::{FitOptions, ObjectiveSpec};
use delayfit_core::dde::SolverConfig;
use delayfit_core::ensemble::{EnsembleSettings, ParamDistributions};
use delayfit_core::model::{uniform_lag_grid, BetaSchedule, Compartment, ModelParams, TransmissionMode};
use delayfit_core::series::DataWindow;

pub const RESOLVED_NAME: &str = "config.resolved.toml";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config.{key}: {reason}")]
    Field { key: &'static str, reason: String },
}

fn field(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Surveillance CSV; required by `fit` and `ensemble`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub n0: f64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Days before `start` used as history; defaults to `ceil(max σ)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history_days: Option<usize>,

    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_count: usize,
    /// Explicit lag list; takes precedence over the uniform grid keys.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    /// Kernel for `simulate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,

    pub beta: f64,
    pub phi_r: f64,
    pub phi_d: f64,
    pub mode: TransmissionMode,
    pub rel_std: f64,
    /// `[day, multiplier]` pairs, days counted from `start`.
    pub beta_breakpoints: Vec<(f64, f64)>,

    pub compartments: Vec<Compartment>,
    pub normalize: bool,

    pub n_runs: u64,
    pub seed: u64,
    pub threshold: f64,
    pub workers: usize,
    pub out_dir: PathBuf,

    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    pub fit_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,

    /// `[s, i, r, d]` held constant as history when `simulate` runs
    /// without data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<[f64; 4]>,
    /// Simulated days without data.
    pub days: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        let fit = FitOptions::default();
        RunConfig {
            data: None,
            n0: 60_244_639.0,
            start: NaiveDate::from_ymd_opt(2020, 9, 11).unwrap(),
            end: NaiveDate::from_ymd_opt(2021, 2, 7).unwrap(),
            history_days: None,
            sigma_min: 2.0,
            sigma_max: 35.0,
            sigma_count: 12,
            sigmas: None,
            weights: None,
            beta: 0.1131,
            phi_r: 1.0 / 24.0,
            phi_d: 1.0 / 940.0,
            mode: TransmissionMode::Frequency,
            rel_std: 0.05,
            beta_breakpoints: vec![(73.0, 1.0 / 3.0)],
            compartments: vec![Compartment::I, Compartment::D],
            normalize: false,
            n_runs: 1000,
            seed: 0,
            threshold: 0.01,
            workers: 1,
            out_dir: PathBuf::from("out"),
            rel_tol: solver.rel_tol,
            abs_tol: solver.abs_tol,
            max_step: solver.max_step,
            initial_step: solver.initial_step,
            fit_tol: fit.tol,
            max_iter: fit.max_iter,
            fd_step: fit.fd_step,
            initial_state: None,
            days: 150,
        }
    }
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_runs: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(data) = &cfg.data {
            if data.is_relative() {
                cfg.data = Some(base.join(data));
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.n_runs {
            self.n_runs = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
    }

    /// Validates every key and fills derived values.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let sigmas = self.lag_grid()?;
        let max_lag = sigmas[sigmas.len() - 1];
        let history_days = match self.history_days {
            Some(h) => h,
            None => max_lag.ceil() as usize,
        };
        if (history_days as f64) < max_lag {
            return Err(field(
                "history_days",
                format!("{history_days} days cannot cover the largest lag {max_lag}"),
            ));
        }
        self.history_days = Some(history_days);
        self.sigmas = Some(sigmas);

        positive("n0", self.n0)?;
        positive("beta", self.beta)?;
        positive("phi_r", self.phi_r)?;
        positive("phi_d", self.phi_d)?;
        if !(self.rel_std.is_finite() && self.rel_std >= 0.0) {
            return Err(field("rel_std", "must be finite and >= 0"));
        }
        BetaSchedule::new(self.beta, self.beta_breakpoints.clone())
            .map_err(|e| field("beta_breakpoints", e.to_string()))?;
        if self.end < self.start {
            return Err(field("end", format!("{} precedes start {}", self.end, self.start)));
        }
        if self.window().fit_days() < 2 {
            return Err(field("end", "the window needs at least two days"));
        }
        if self.compartments.is_empty() {
            return Err(field("compartments", "at least one of s, i, r, d required"));
        }
        if self.n_runs == 0 {
            return Err(field("n_runs", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(field("threshold", "must lie in [0, 1]"));
        }
        if self.workers == 0 {
            return Err(field("workers", "must be at least 1"));
        }
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("max_step", self.max_step)?;
        positive("initial_step", self.initial_step)?;
        positive("fit_tol", self.fit_tol)?;
        positive("fd_step", self.fd_step)?;
        if self.days < 2 {
            return Err(field("days", "must be at least 2"));
        }
        if let Some(w) = &self.weights {
            let k = self.sigmas.as_ref().map_or(0, Vec::len);
            if w.len() != k {
                return Err(field("weights", format!("{} weights for {k} lags", w.len())));
            }
            delayfit_core::model::DelayKernel::new(self.sigmas.clone().unwrap(), w.clone())
                .map_err(|e| field("weights", e.to_string()))?;
        }
        if let Some(st) = &self.initial_state {
            if st.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(field("initial_state", "entries must be finite and >= 0"));
            }
        }
        if let Some(data) = &self.data {
            if let Ok(abs) = fs::canonicalize(data) {
                self.data = Some(abs);
            }
        }
        if let Ok(cwd) = std::env::current_dir() {
            if self.out_dir.is_relative() {
                self.out_dir = cwd.join(&self.out_dir);
            }
        }
        Ok(self)
    }

    fn lag_grid(&self) -> Result<Vec<f64>, ConfigError> {
        if let Some(s) = &self.sigmas {
            if s.is_empty() {
                return Err(field("sigmas", "at least one lag required"));
            }
            if s.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(field("sigmas", "lags must be finite and > 0"));
            }
            if s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(field("sigmas", "lags must be strictly increasing"));
            }
            return Ok(s.clone());
        }
        if self.sigma_count == 0 {
            return Err(field("sigma_count", "must be at least 1"));
        }
        if !(self.sigma_min.is_finite() && self.sigma_min > 0.0) {
            return Err(field("sigma_min", "must be finite and > 0"));
        }
        if self.sigma_count > 1 && (self.sigma_max.is_nan() || self.sigma_max <= self.sigma_min) {
            return Err(field("sigma_max", "must exceed sigma_min"));
        }
        uniform_lag_grid(self.sigma_min, self.sigma_max, self.sigma_count)
            .map_err(|e| field("sigma_max", e.to_string()))
    }

    /// Lag grid of a resolved config.
    pub fn lags(&self) -> Vec<f64> {
        self.sigmas.clone().expect("resolved config")
    }

    pub fn window(&self) -> DataWindow {
        DataWindow {
            start: self.start,
            end: self.end,
            history_days: self.history_days.unwrap_or(0),
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            initial_step: self.initial_step,
            forced_breakpoints: Vec::new(),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.fit_tol,
            max_iter: self.max_iter,
            fd_step: self.fd_step,
            ..FitOptions::default()
        }
    }

    pub fn distributions(&self) -> ParamDistributions {
        ParamDistributions {
            beta_mean: self.beta,
            phi_r_mean: self.phi_r,
            phi_d_mean: self.phi_d,
            rel_std: self.rel_std,
            mode: self.mode,
            beta_breakpoints: self.beta_breakpoints.clone(),
            n0: self.n0,
        }
    }

    /// Parameters at the configured means.
    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        self.distributions()
            .means()
            .map_err(|e| field("beta", e.to_string()))
    }

    pub fn objective(&self, n_days: usize) -> Result<ObjectiveSpec, ConfigError> {
        ObjectiveSpec::daily(&self.compartments, n_days)
            .map(|s| s.normalized(self.normalize))
            .map_err(|e| field("compartments", e.to_string()))
    }

    pub fn ensemble_settings(&self, n_days: usize) -> Result<EnsembleSettings, ConfigError> {
        Ok(EnsembleSettings {
            n_runs: self.n_runs,
            seed: self.seed,
            threshold: self.threshold,
            sigmas: self.lags(),
            spec: self.objective(n_days)?,
            distributions: self.distributions(),
            fit: self.fit_options(),
        })
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf, ConfigError> {
        let path = dir.join(RESOLVED_NAME);
        fs::write(&path, self.to_toml()).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(key, format!("must be finite and > 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_setup() {
        let cfg = RunConfig::parse("").unwrap().resolve().unwrap();
        assert_eq!(cfg.lags(), vec![2.0, 5.0, 8.0, 11.0, 14.0, 17.0, 20.0, 23.0, 26.0, 29.0, 32.0, 35.0]);
        assert_eq!(cfg.history_days, Some(35));
        assert_eq!(cfg.window().fit_days(), 150);
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::parse("phi_r = -1.0").unwrap().resolve().unwrap_err();
        assert!(e.to_string().starts_with("config.phi_r:"), "{e}");
        let e = RunConfig::parse("n_runs = 0").unwrap().resolve().unwrap_err();
        assert!(e.to_string().starts_with("config.n_runs:"), "{e}");
        let e = RunConfig::parse("sigmas = [3.0, 2.0]").unwrap().resolve().unwrap_err();
        assert!(e.to_string().starts_with("config.sigmas:"), "{e}");
        let e = RunConfig::parse("history_days = 10").unwrap().resolve().unwrap_err();
        assert!(e.to_string().starts_with("config.history_days:"), "{e}");
        let e = RunConfig::parse("sigmas = [2.0, 5.0]\nweights = [0.5]").unwrap().resolve().unwrap_err();
        assert!(e.to_string().starts_with("config.weights:"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse("sigma_cnt = 3").unwrap_err();
        assert!(e.contains("sigma_cnt"), "{e}");
    }

    #[test]
    fn resolved_document_is_a_fixed_point() {
        let cfg = RunConfig::parse("sigma_count = 4\nsigma_max = 11.0\nweights = [0.25, 0.25, 0.25, 0.25]")
            .unwrap()
            .resolve()
            .unwrap();
        let text = cfg.to_toml();
        let again = RunConfig::parse(&text).unwrap().resolve().unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), text);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = RunConfig::parse("seed = 1\nn_runs = 5").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            n_runs: None,
            workers: Some(3),
            out_dir: None,
        });
        assert_eq!((cfg.seed, cfg.n_runs, cfg.workers), (9, 5, 3));
    }
}
