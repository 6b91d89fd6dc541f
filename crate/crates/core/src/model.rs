//! Delayed SIRD vector field.
//!
//! The infection pressure is a discretized convolution of past infected
//! counts with a weight function: `C(t) = Σ_j w_j · i(t − σ_j)`. With that
//! term the system reads
//!
//! ```text
//! s' = −β(t) s C
//! i' =  β(t) s C − (φ_d + φ_r) C
//! r' =  φ_r C
//! d' =  φ_d C
//! ```
//!
//! so the four derivatives always sum to zero and the population is
//! conserved.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::dde::DdeSystem;
use crate::{Error, Result};

/// Tolerance on `Σ w_j = 1` accepted by [`DelayKernel::new`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Compartment sizes in persons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl State {
    pub const fn new(s: f64, i: f64, r: f64, d: f64) -> Self {
        State { s, i, r, d }
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.s, self.i, self.r, self.d]
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        State::new(a[0], a[1], a[2], a[3])
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.d
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

impl Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State::new(self.s + o.s, self.i + o.i, self.r + o.r, self.d + o.d)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.s - o.s, self.i - o.i, self.r - o.r, self.d - o.d)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, k: f64) -> State {
        State::new(self.s * k, self.i * k, self.r * k, self.d * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compartment {
    S,
    I,
    R,
    D,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [Compartment::S, Compartment::I, Compartment::R, Compartment::D];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Compartment::S => "s",
            Compartment::I => "i",
            Compartment::R => "r",
            Compartment::D => "d",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "s" | "S" => Some(Compartment::S),
            "i" | "I" => Some(Compartment::I),
            "r" | "R" => Some(Compartment::R),
            "d" | "D" => Some(Compartment::D),
            _ => None,
        }
    }
}

impl core::fmt::Display for Compartment {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Lag grid `σ_j` (days) with simplex weights `w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayKernel {
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

impl DelayKernel {
    pub fn new(sigmas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_sigmas(&sigmas)?;
        if weights.len() != sigmas.len() {
            return Err(Error::LengthMismatch {
                left: sigmas.len(),
                right: weights.len(),
            });
        }
        validate_simplex(&weights)?;
        Ok(DelayKernel { sigmas, weights })
    }

    /// All mass on `sigmas[index]`.
    pub fn dirac(sigmas: Vec<f64>, index: usize) -> Result<Self> {
        if index >= sigmas.len() {
            return Err(Error::invalid(
                "kernel.index",
                format!("{index} out of range for {} lags", sigmas.len()),
            ));
        }
        let mut weights = alloc::vec![0.0; sigmas.len()];
        weights[index] = 1.0;
        DelayKernel::new(sigmas, weights)
    }

    pub fn uniform(sigmas: Vec<f64>) -> Result<Self> {
        let k = sigmas.len().max(1);
        let weights = alloc::vec![1.0 / k as f64; sigmas.len()];
        DelayKernel::new(sigmas, weights)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn max_lag(&self) -> f64 {
        self.sigmas.last().copied().unwrap_or(0.0)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        DelayKernel::new(self.sigmas.clone(), weights)
    }
}

/// Uniform grid `min, min + step, …` with `count` points.
pub fn uniform_lag_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("delay_grid.count", "must be at least 1"));
    }
    if count == 1 {
        let grid = alloc::vec![min];
        validate_sigmas(&grid)?;
        return Ok(grid);
    }
    if !(max > min) {
        return Err(Error::invalid("delay_grid.max", "must exceed min"));
    }
    let step = (max - min) / (count - 1) as f64;
    let grid: Vec<f64> = (0..count)
        .map(|j| if j + 1 == count { max } else { min + step * j as f64 })
        .collect();
    validate_sigmas(&grid)?;
    Ok(grid)
}

pub(crate) fn validate_sigmas(sigmas: &[f64]) -> Result<()> {
    if sigmas.is_empty() {
        return Err(Error::invalid("kernel.sigmas", "at least one lag required"));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::invalid("kernel.sigmas", "lags must be finite and > 0"));
    }
    if sigmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("kernel.sigmas", "lags must be strictly increasing"));
    }
    Ok(())
}

pub(crate) fn validate_simplex(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
        return Err(Error::invalid("kernel.weights", "every weight must lie in [0, 1]"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(
            "kernel.weights",
            format!("weights sum to {sum}, expected 1"),
        ));
    }
    Ok(())
}

/// Piecewise-constant contact rate: `base_beta` times every multiplier whose
/// breakpoint (days since t0) has been reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    base_beta: f64,
    breakpoints: Vec<(f64, f64)>,
}

impl BetaSchedule {
    pub fn new(base_beta: f64, breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if !base_beta.is_finite() || base_beta < 0.0 {
            return Err(Error::invalid("beta", "must be finite and non-negative"));
        }
        if breakpoints
            .iter()
            .any(|(t, m)| !t.is_finite() || !m.is_finite() || *m <= 0.0)
        {
            return Err(Error::invalid(
                "beta_breakpoints",
                "times must be finite and multipliers > 0",
            ));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(
                "beta_breakpoints",
                "times must be strictly increasing",
            ));
        }
        Ok(BetaSchedule {
            base_beta,
            breakpoints,
        })
    }

    pub fn constant(base_beta: f64) -> Result<Self> {
        BetaSchedule::new(base_beta, Vec::new())
    }

    pub fn base_beta(&self) -> f64 {
        self.base_beta
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn with_base(&self, base_beta: f64) -> Result<Self> {
        BetaSchedule::new(base_beta, self.breakpoints.clone())
    }

    pub fn factor_at(&self, t: f64) -> f64 {
        self.breakpoints
            .iter()
            .take_while(|(bt, _)| *bt <= t)
            .map(|(_, m)| m)
            .product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransmissionMode {
    /// `β` enters the equations as given.
    #[default]
    Density,
    /// `β / n0` enters the equations.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta_schedule: BetaSchedule,
    pub phi_r: f64,
    pub phi_d: f64,
    pub n0: f64,
    pub mode: TransmissionMode,
}

impl ModelParams {
    pub fn new(
        beta_schedule: BetaSchedule,
        phi_r: f64,
        phi_d: f64,
        n0: f64,
        mode: TransmissionMode,
    ) -> Result<Self> {
        for (field, v) in [("phi_r", phi_r), ("phi_d", phi_d), ("n0", n0)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(field, "must be finite and > 0"));
            }
        }
        Ok(ModelParams {
            beta_schedule,
            phi_r,
            phi_d,
            n0,
            mode,
        })
    }

    pub fn removal_rate(&self) -> f64 {
        self.phi_r + self.phi_d
    }
}

/// `Σ_j w_j · i(t − σ_j)`, reading lagged states through `history_eval`.
pub fn delayed_incidence<F>(history_eval: F, t: f64, kernel: &DelayKernel) -> Result<f64>
where
    F: Fn(f64) -> Result<State>,
{
    let mut acc = 0.0;
    for (&sigma, &w) in kernel.sigmas().iter().zip(kernel.weights()) {
        let lagged = t - sigma;
        let state = history_eval(lagged).map_err(|e| match e {
            Error::OutOfDomain { min, .. } => Error::LagOutOfDomain {
                sigma,
                time: t,
                lagged,
                min,
            },
            other => other,
        })?;
        acc += w * state.i;
    }
    Ok(acc)
}

pub fn effective_beta(t: f64, params: &ModelParams) -> f64 {
    let beta = params.beta_schedule.base_beta() * params.beta_schedule.factor_at(t);
    match params.mode {
        TransmissionMode::Density => beta,
        TransmissionMode::Frequency => beta / params.n0,
    }
}

/// Derivatives for a known infection pressure `c`.
#[inline]
pub fn derivative_from_pressure(beta: f64, s: f64, c: f64, params: &ModelParams) -> State {
    let infection = beta * s * c;
    State::new(
        -infection,
        infection - params.removal_rate() * c,
        params.phi_r * c,
        params.phi_d * c,
    )
}

pub fn rhs<F>(
    t: f64,
    current: &State,
    history_eval: F,
    params: &ModelParams,
    kernel: &DelayKernel,
) -> Result<State>
where
    F: Fn(f64) -> Result<State>,
{
    let c = delayed_incidence(history_eval, t, kernel)?;
    Ok(derivative_from_pressure(
        effective_beta(t, params),
        current.s,
        c,
        params,
    ))
}

/// `π / (2σ_j) − (φ_d + φ_r)` per lag; all positive is the stable regime.
pub fn stability_margin(params: &ModelParams, kernel: &DelayKernel) -> Vec<f64> {
    stability_margin_for(params.phi_r, params.phi_d, kernel.sigmas())
}

pub fn stability_margin_for(phi_r: f64, phi_d: f64, sigmas: &[f64]) -> Vec<f64> {
    sigmas
        .iter()
        .map(|s| PI / (2.0 * s) - (phi_d + phi_r))
        .collect()
}

/// The delayed SIRD system as consumed by the integrator.
///
/// `weights` are not checked against the simplex here: finite-difference
/// probes evaluate the field slightly off the feasible set.
#[derive(Debug, Clone, Copy)]
pub struct DelayedSird<'a> {
    pub params: &'a ModelParams,
    pub weights: &'a [f64],
}

impl DdeSystem<4> for DelayedSird<'_> {
    #[inline]
    fn derivative(&self, t: f64, y: &[f64; 4], lagged: &[[f64; 4]]) -> [f64; 4] {
        let c: f64 = self
            .weights
            .iter()
            .zip(lagged)
            .map(|(w, z)| w * z[1])
            .sum();
        derivative_from_pressure(effective_beta(t, self.params), y[0], c, self.params).to_array()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params(beta: f64, mode: TransmissionMode) -> ModelParams {
        ModelParams::new(
            BetaSchedule::new(beta, vec![(73.0, 1.0 / 3.0)]).unwrap(),
            1.0 / 24.0,
            1.0 / 940.0,
            1000.0,
            mode,
        )
        .unwrap()
    }

    fn infected(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> Result<State> {
        move |t| Ok(State::new(0.0, f(t), 0.0, 0.0))
    }

    #[test]
    fn incidence_constant_history() {
        let k = DelayKernel::new(vec![2.0, 5.0, 9.0], vec![0.2, 0.3, 0.5]).unwrap();
        let c = delayed_incidence(infected(|_| 5.0), 40.0, &k).unwrap();
        assert!((c - 5.0).abs() < 1e-14);
    }

    #[test]
    fn incidence_dirac() {
        let k = DelayKernel::dirac(vec![2.0], 0).unwrap();
        assert_eq!(delayed_incidence(infected(|t| t), 10.0, &k).unwrap(), 8.0);
    }

    #[test]
    fn incidence_two_lags_by_hand() {
        let k = DelayKernel::new(vec![1.0, 2.0], vec![0.25, 0.75]).unwrap();
        let c = delayed_incidence(infected(|t| t * t), 3.0, &k).unwrap();
        assert!((c - 1.75).abs() < 1e-14);
    }

    #[test]
    fn incidence_names_offending_lag() {
        let k = DelayKernel::new(vec![1.0, 20.0], vec![0.5, 0.5]).unwrap();
        let eval = |t: f64| {
            if t < -10.0 {
                Err(Error::OutOfDomain {
                    time: t,
                    min: -10.0,
                    max: 0.0,
                })
            } else {
                Ok(State::default())
            }
        };
        match delayed_incidence(eval, 0.0, &k) {
            Err(Error::LagOutOfDomain { sigma, .. }) => assert_eq!(sigma, 20.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn beta_schedule_values() {
        let p = params(0.1131, TransmissionMode::Density);
        assert_eq!(effective_beta(10.0, &p), 0.1131);
        assert!((effective_beta(100.0, &p) - 0.0377).abs() < 1e-12);
        let c = ModelParams {
            beta_schedule: BetaSchedule::constant(0.3).unwrap(),
            ..p
        };
        assert_eq!(effective_beta(1e4, &c), 0.3);
    }

    #[test]
    fn frequency_mode_divides_by_population() {
        let p = params(0.1131, TransmissionMode::Frequency);
        assert!((effective_beta(0.0, &p) - 0.1131 / 1000.0).abs() < 1e-18);
    }

    #[test]
    fn multiplicative_breakpoints_compose() {
        let s = BetaSchedule::new(1.0, vec![(1.0, 0.5), (2.0, 4.0)]).unwrap();
        assert_eq!(s.factor_at(0.5), 1.0);
        assert_eq!(s.factor_at(1.0), 0.5);
        assert_eq!(s.factor_at(2.5), 2.0);
    }

    #[test]
    fn rhs_disease_free() {
        let p = params(0.2, TransmissionMode::Density);
        let k = DelayKernel::uniform(vec![2.0, 4.0]).unwrap();
        let d = rhs(3.0, &State::new(900.0, 0.0, 0.0, 0.0), infected(|_| 0.0), &p, &k).unwrap();
        assert_eq!(d, State::default());
    }

    #[test]
    fn rhs_single_delay_susceptible_loss() {
        let p = params(0.002, TransmissionMode::Density);
        let k = DelayKernel::dirac(vec![7.0], 0).unwrap();
        let d = rhs(1.0, &State::new(900.0, 3.0, 0.0, 0.0), infected(|_| 3.0), &p, &k).unwrap();
        assert!((d.s - (-0.002 * 900.0 * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn stability_margin_values() {
        let p = params(0.1, TransmissionMode::Density);
        let k = DelayKernel::dirac(vec![35.0], 0).unwrap();
        let m = stability_margin(&p, &k)[0];
        let expected = PI / 70.0 - (1.0 / 24.0 + 1.0 / 940.0);
        assert!((m - expected).abs() < 1e-15);
        assert!((m - 0.00215).abs() < 1e-5);

        let boundary = stability_margin_for(PI / 70.0 - 0.01, 0.01, &[35.0])[0];
        assert!(boundary.abs() < 1e-15);
        assert!(stability_margin_for(1.0, 1.0, &[35.0])[0] < -1.9);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(DelayKernel::new(vec![2.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(DelayKernel::new(vec![0.0], vec![1.0]).is_err());
        assert!(DelayKernel::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(DelayKernel::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(DelayKernel::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DelayKernel::new(vec![], vec![]).is_err());
    }

    #[test]
    fn paper_lag_grid() {
        let g = uniform_lag_grid(2.0, 35.0, 12).unwrap();
        assert_eq!(g.len(), 12);
        for (j, s) in g.iter().enumerate() {
            assert!((s - (2.0 + 3.0 * j as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_rejects_bad_breakpoints() {
        assert!(BetaSchedule::new(0.1, vec![(5.0, 0.5), (5.0, 0.5)]).is_err());
        assert!(BetaSchedule::new(0.1, vec![(5.0, 0.0)]).is_err());
        assert!(ModelParams::new(BetaSchedule::constant(0.1).unwrap(), 0.0, 1.0, 1.0, TransmissionMode::Density).is_err());
    }
}
