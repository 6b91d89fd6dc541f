//! Adaptive integrator for systems with constant lags.
//!
//! Steps use the Bogacki–Shampine 3(2) pair with first-same-as-last stages;
//! every accepted step stores a cubic Hermite segment so the solution can be
//! read at arbitrary past times. Steps never exceed the smallest lag, so a
//! lagged read always lands in history or in an already accepted segment.
//!
//! Derivative discontinuities propagate from `t0` at `t0 + σ_j` and
//! `t0 + σ_j + σ_l`; those times, together with any caller-provided
//! breakpoints, are hit exactly as step endpoints.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::powf;
use crate::{Error, Result};

/// Smallest step the controller may take before giving up, in days.
pub const MIN_STEP: f64 = 1e-10;

const SAFETY: f64 = 0.8;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.1;

/// Prescribed solution on `[t_min, t0]`.
pub trait History<const N: usize> {
    /// `(t_min, t0)`.
    fn domain(&self) -> (f64, f64);

    /// Value at `t`; only called with `t` inside [`History::domain`].
    fn value(&self, t: f64) -> [f64; N];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantHistory<const N: usize> {
    pub t_min: f64,
    pub t0: f64,
    pub state: [f64; N],
}

impl<const N: usize> History<N> for ConstantHistory<N> {
    fn domain(&self) -> (f64, f64) {
        (self.t_min, self.t0)
    }

    fn value(&self, _t: f64) -> [f64; N] {
        self.state
    }
}

/// Piecewise-linear interpolant through `(times[k], values[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHistory<const N: usize> {
    times: Vec<f64>,
    values: Vec<[f64; N]>,
}

impl<const N: usize> LinearHistory<N> {
    pub fn new(times: Vec<f64>, values: Vec<[f64; N]>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("history", "at least one knot required"));
        }
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: values.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("history", "knot times must be strictly increasing"));
        }
        Ok(LinearHistory { times, values })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, &[f64; N])> {
        self.times.iter().copied().zip(self.values.iter())
    }
}

impl<const N: usize> History<N> for LinearHistory<N> {
    fn domain(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    fn value(&self, t: f64) -> [f64; N] {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.values[k - 1];
        }
        if self.times[k] == t {
            return self.values[k];
        }
        let (ta, tb) = (self.times[k - 1], self.times[k]);
        let theta = (t - ta) / (tb - ta);
        let (a, b) = (&self.values[k - 1], &self.values[k]);
        core::array::from_fn(|n| a[n] + theta * (b[n] - a[n]))
    }
}

/// History given by an arbitrary function.
pub struct FnHistory<F> {
    pub t_min: f64,
    pub t0: f64,
    pub f: F,
}

impl<const N: usize, F: Fn(f64) -> [f64; N]> History<N> for FnHistory<F> {
    fn domain(&self) -> (f64, f64) {
        (self.t_min, self.t0)
    }

    fn value(&self, t: f64) -> [f64; N] {
        (self.f)(t)
    }
}

/// Vector field `y'(t) = F(t, y(t), y(t − lag_0), …, y(t − lag_{m−1}))`.
pub trait DdeSystem<const N: usize> {
    /// `lagged[j]` is the state at `t − lags[j]`, in the order the lags were
    /// given to [`integrate`].
    fn derivative(&self, t: f64, y: &[f64; N], lagged: &[[f64; N]]) -> [f64; N];
}

impl<const N: usize, F> DdeSystem<N> for F
where
    F: Fn(f64, &[f64; N], &[[f64; N]]) -> [f64; N],
{
    fn derivative(&self, t: f64, y: &[f64; N], lagged: &[[f64; N]]) -> [f64; N] {
        self(t, y, lagged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// Persons for the epidemic model.
    pub abs_tol: f64,
    /// Days.
    pub max_step: f64,
    /// Days.
    pub initial_step: f64,
    /// Extra times to hit exactly, e.g. contact-rate switches.
    pub forced_breakpoints: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            max_step: 10.0,
            initial_step: 0.05,
            forced_breakpoints: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rel_tol) {
            return Err(Error::invalid("solver.rel_tol", "must be > 0"));
        }
        if !positive(self.abs_tol) {
            return Err(Error::invalid("solver.abs_tol", "must be > 0"));
        }
        if !positive(self.max_step) {
            return Err(Error::invalid("solver.max_step", "must be > 0"));
        }
        if !positive(self.initial_step) {
            return Err(Error::invalid("solver.initial_step", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment<const N: usize> {
    t0: f64,
    t1: f64,
    y0: [f64; N],
    y1: [f64; N],
    /// Right-hand limit of the derivative at `t0`.
    f0: [f64; N],
    /// Left-hand limit of the derivative at `t1`.
    f1: [f64; N],
    on_breakpoint: bool,
}

impl<const N: usize> Segment<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        if t == self.t1 {
            return self.y1;
        }
        if t == self.t0 {
            return self.y0;
        }
        let h = self.t1 - self.t0;
        let th = (t - self.t0) / h;
        let th2 = th * th;
        let th3 = th2 * th;
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = th3 - 2.0 * th2 + th;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = th3 - th2;
        core::array::from_fn(|n| {
            h00 * self.y0[n] + h10 * h * self.f0[n] + h01 * self.y1[n] + h11 * h * self.f1[n]
        })
    }
}

/// Dense solution over `[t0, t_end]` plus the history it started from.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize, H> {
    t0: f64,
    t_end: f64,
    initial: [f64; N],
    segments: Vec<Segment<N>>,
    history: H,
    rejected_steps: usize,
}

impl<const N: usize, H: History<N>> Trajectory<N, H> {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn history(&self) -> &H {
        &self.history
    }

    pub fn accepted_steps(&self) -> usize {
        self.segments.len()
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected_steps
    }

    /// `t0` followed by every accepted step endpoint.
    pub fn step_times(&self) -> impl Iterator<Item = f64> + '_ {
        core::iter::once(self.t0).chain(self.segments.iter().map(|s| s.t1))
    }

    /// State at `t`; exact at step endpoints, history for `t < t0`.
    pub fn eval(&self, t: f64) -> Result<[f64; N]> {
        let (t_min, _) = self.history.domain();
        if !(t >= t_min && t <= self.t_end) {
            return Err(Error::OutOfDomain {
                time: t,
                min: t_min,
                max: self.t_end,
            });
        }
        if t < self.t0 {
            return Ok(self.history.value(t));
        }
        if t == self.t0 {
            return Ok(self.initial);
        }
        let k = self.segments.partition_point(|s| s.t1 < t);
        Ok(self.segments[k.min(self.segments.len() - 1)].eval(t))
    }

    pub fn sample(&self, times: &[f64]) -> Result<Vec<[f64; N]>> {
        times.iter().map(|&t| self.eval(t)).collect()
    }
}

/// Read access to the solution while it is still being built.
struct Past<'a, const N: usize, H> {
    history: &'a H,
    t_min: f64,
    t0: f64,
    initial: [f64; N],
    segments: &'a [Segment<N>],
}

impl<const N: usize, H: History<N>> Past<'_, N, H> {
    fn at(&self, t: f64) -> [f64; N] {
        if t <= self.t0 {
            return self.history.value(t.max(self.t_min));
        }
        match self.segments.last() {
            None => self.initial,
            Some(last) if t >= last.t1 => last.y1,
            Some(_) => {
                let k = self.segments.partition_point(|s| s.t1 < t);
                self.segments[k].eval(t)
            }
        }
    }

    fn fill(&self, t: f64, lags: &[f64], out: &mut [[f64; N]]) {
        for (z, lag) in out.iter_mut().zip(lags) {
            *z = self.at(t - lag);
        }
    }
}

/// Discontinuity times strictly inside `(t0, t_end]`, with `t_end` last.
fn breakpoint_schedule(t0: f64, t_end: f64, lags: &[f64], forced: &[f64]) -> Vec<f64> {
    let mut bps: Vec<f64> = Vec::new();
    bps.extend_from_slice(forced);
    for &a in lags {
        bps.push(t0 + a);
        for &b in lags {
            bps.push(t0 + a + b);
        }
    }
    bps.retain(|&b| b > t0 && b < t_end);
    bps.push(t_end);
    bps.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(bps.len());
    for b in bps {
        match out.last_mut() {
            Some(prev) if b - *prev <= 1e-9 * prev.abs().max(1.0) => {
                // keep the later one so t_end survives exactly
                *prev = b;
            }
            _ => out.push(b),
        }
    }
    out.retain(|&b| b - t0 > 1e-9 * t0.abs().max(1.0));
    if out.last() != Some(&t_end) {
        out.push(t_end);
    }
    out
}

/// Step endpoints of a solve, replayable with fixed steps.
///
/// `times[0]` is `t0`; `on_breakpoint[k]` marks whether `times[k + 1]` is a
/// discontinuity that was approached from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMesh {
    times: Vec<f64>,
    on_breakpoint: Vec<bool>,
}

impl StepMesh {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.on_breakpoint.len()
    }
}

impl<const N: usize, H: History<N>> Trajectory<N, H> {
    /// Mesh of accepted steps, for [`integrate_on_mesh`].
    pub fn mesh(&self) -> StepMesh {
        StepMesh {
            times: self.step_times().collect(),
            on_breakpoint: self.segments.iter().map(|s| s.on_breakpoint).collect(),
        }
    }
}

/// Validated inputs shared by the adaptive and fixed-mesh drivers.
struct Stepper<'a, const N: usize, S: ?Sized, H> {
    system: &'a S,
    history: &'a H,
    lags: &'a [f64],
    t_min: f64,
    t0: f64,
    initial: [f64; N],
}

impl<'a, const N: usize, S, H> Stepper<'a, N, S, H>
where
    S: DdeSystem<N> + ?Sized,
    H: History<N>,
{
    fn new(system: &'a S, history: &'a H, t_span: (f64, f64), lags: &'a [f64]) -> Result<Self> {
        let (t0, t_end) = t_span;
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::invalid("t_span", "t_end must exceed t0"));
        }
        if lags.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::invalid("lags", "lags must be finite and > 0"));
        }
        let (t_min, h_t0) = history.domain();
        if h_t0 != t0 {
            return Err(Error::invalid("history", "history must end at t0"));
        }
        let max_lag = lags.iter().copied().fold(0.0, f64::max);
        if t_min > t0 - max_lag {
            return Err(Error::OutOfDomain {
                time: t0 - max_lag,
                min: t_min,
                max: t0,
            });
        }
        Ok(Stepper {
            system,
            history,
            lags,
            t_min,
            t0,
            initial: history.value(t0),
        })
    }

    fn min_lag(&self) -> f64 {
        self.lags.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn derivative(&self, segments: &[Segment<N>], t: f64, y: &[f64; N], buf: &mut [[f64; N]]) -> [f64; N] {
        let past = Past {
            history: self.history,
            t_min: self.t_min,
            t0: self.t0,
            initial: self.initial,
            segments,
        };
        past.fill(t, self.lags, buf);
        self.system.derivative(t, y, buf)
    }

    /// One Bogacki–Shampine step from `(t, y)` with `f = y'(t+)`.
    /// Returns the new state, the derivative at the end and the embedded
    /// error estimate per component.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        segments: &[Segment<N>],
        t: f64,
        y: &[f64; N],
        f: &[f64; N],
        t_new: f64,
        left_limit: bool,
        buf: &mut [[f64; N]],
    ) -> ([f64; N], [f64; N], [f64; N]) {
        let h = t_new - t;
        let y2: [f64; N] = core::array::from_fn(|n| y[n] + 0.5 * h * f[n]);
        let k2 = self.derivative(segments, t + 0.5 * h, &y2, buf);
        let y3: [f64; N] = core::array::from_fn(|n| y[n] + 0.75 * h * k2[n]);
        let k3 = self.derivative(segments, t + 0.75 * h, &y3, buf);
        let y_new: [f64; N] = core::array::from_fn(|n| {
            y[n] + h * (2.0 / 9.0 * f[n] + 1.0 / 3.0 * k2[n] + 4.0 / 9.0 * k3[n])
        });
        let t_last = if left_limit { t_new.next_down() } else { t_new };
        let k4 = self.derivative(segments, t_last, &y_new, buf);
        let err = core::array::from_fn(|n| {
            h * (-5.0 / 72.0 * f[n] + 1.0 / 12.0 * k2[n] + 1.0 / 9.0 * k3[n] - 1.0 / 8.0 * k4[n])
        });
        (y_new, k4, err)
    }
}

/// Solves the system on `t_span` from `history`.
pub fn integrate<const N: usize, S, H>(
    system: &S,
    history: H,
    t_span: (f64, f64),
    lags: &[f64],
    config: &SolverConfig,
) -> Result<Trajectory<N, H>>
where
    S: DdeSystem<N> + ?Sized,
    H: History<N>,
{
    config.validate()?;
    let (t0, t_end) = t_span;
    let st = Stepper::new(system, &history, t_span, lags)?;
    if config
        .forced_breakpoints
        .iter()
        .any(|&b| !(b >= t0 && b <= t_end))
    {
        return Err(Error::invalid(
            "solver.forced_breakpoints",
            "breakpoints must lie within [t0, t_end]",
        ));
    }
    let h_cap = config.max_step.min(st.min_lag());

    let breakpoints = breakpoint_schedule(t0, t_end, lags, &config.forced_breakpoints);
    let initial = st.initial;
    let mut segments: Vec<Segment<N>> = Vec::with_capacity(256);
    let mut lagged = alloc::vec![[0.0; N]; lags.len()];
    let mut rejected_steps = 0;

    let mut t = t0;
    let mut y = initial;
    let mut f = st.derivative(&segments, t, &y, &mut lagged);
    let mut h = config.initial_step.min(h_cap);
    let mut bp = 0;

    while t < t_end {
        let next_bp = breakpoints[bp];
        h = h.min(h_cap);
        let hits = t + 1.1 * h >= next_bp && next_bp - t <= h_cap;
        if !hits && next_bp - (t + h) < 0.1 * h {
            // the cap keeps the breakpoint out of reach; split the gap
            // instead of leaving a sliver before it
            h = 0.5 * (next_bp - t);
        }
        let t_new = if hits { next_bp } else { t + h };
        h = t_new - t;
        if h < MIN_STEP {
            return Err(Error::StepUnderflow { time: t, step: h });
        }

        let (y_new, k4, e) = st.step(&segments, t, &y, &f, t_new, hits, &mut lagged);
        let mut err: f64 = 0.0;
        for n in 0..N {
            let scale = config.abs_tol + config.rel_tol * y[n].abs().max(y_new[n].abs());
            err = err.max(e[n].abs() / scale);
        }
        if !err.is_finite() {
            err = f64::MAX;
        }

        if err <= 1.0 {
            segments.push(Segment {
                t0: t,
                t1: t_new,
                y0: y,
                y1: y_new,
                f0: f,
                f1: k4,
                on_breakpoint: hits,
            });
            let growth = if err == 0.0 {
                MAX_GROWTH
            } else {
                (SAFETY * powf(err, -1.0 / 3.0)).clamp(0.2, MAX_GROWTH)
            };
            t = t_new;
            y = y_new;
            if hits {
                bp += 1;
                f = st.derivative(&segments, t, &y, &mut lagged);
            } else {
                f = k4;
            }
            h *= growth;
        } else {
            rejected_steps += 1;
            h *= (SAFETY * powf(err, -1.0 / 3.0)).clamp(MIN_SHRINK, 1.0);
        }
    }

    Ok(Trajectory {
        t0,
        t_end,
        initial,
        segments,
        history,
        rejected_steps,
    })
}

/// Solves the system with the fixed steps of `mesh`, without error control.
///
/// The result is a smooth function of the system's parameters as long as
/// the mesh is held fixed, which makes it suitable for finite differences.
pub fn integrate_on_mesh<const N: usize, S, H>(
    system: &S,
    history: H,
    lags: &[f64],
    mesh: &StepMesh,
) -> Result<Trajectory<N, H>>
where
    S: DdeSystem<N> + ?Sized,
    H: History<N>,
{
    let times = &mesh.times;
    if times.len() < 2 || times.len() != mesh.on_breakpoint.len() + 1 {
        return Err(Error::invalid("mesh", "mesh needs at least one step"));
    }
    let (t0, t_end) = (times[0], times[times.len() - 1]);
    let st = Stepper::new(system, &history, (t0, t_end), lags)?;
    let min_lag = st.min_lag();
    // `t + h` rounds, so allow a few ulps of `t` beyond the lag
    let fits = |p: &[f64]| {
        let h = p[1] - p[0];
        h >= MIN_STEP && h <= min_lag + 8.0 * f64::EPSILON * p[1].abs()
    };
    if !times.windows(2).all(fits) {
        return Err(Error::invalid("mesh", "steps must lie in [MIN_STEP, min lag]"));
    }

    let initial = st.initial;
    let mut segments: Vec<Segment<N>> = Vec::with_capacity(mesh.steps());
    let mut lagged = alloc::vec![[0.0; N]; lags.len()];
    let mut y = initial;
    let mut f = st.derivative(&segments, t0, &y, &mut lagged);
    for (p, &hits) in times.windows(2).zip(&mesh.on_breakpoint) {
        let (t, t_new) = (p[0], p[1]);
        let (y_new, k4, _) = st.step(&segments, t, &y, &f, t_new, hits, &mut lagged);
        segments.push(Segment {
            t0: t,
            t1: t_new,
            y0: y,
            y1: y_new,
            f0: f,
            f1: k4,
            on_breakpoint: hits,
        });
        y = y_new;
        f = if hits {
            st.derivative(&segments, t_new, &y, &mut lagged)
        } else {
            k4
        };
    }

    Ok(Trajectory {
        t0,
        t_end,
        initial,
        segments,
        history,
        rejected_steps: 0,
    })
}
