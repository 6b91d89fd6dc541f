//! Least-squares identification of the delay weights.
//!
//! For fixed rates the weights are found by minimizing the squared distance
//! between simulated and measured compartments at the daily sample points,
//! subject to the weights lying on the probability simplex. Derivatives
//! come from forward differences, one full integration per weight, on a
//! step mesh held fixed between refreshes.

use alloc::boxed::Box;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dde::{integrate, integrate_on_mesh, History, LinearHistory, SolverConfig, StepMesh, Trajectory};
use crate::math::{dot, norm2, sqrt};
use crate::model::{validate_sigmas, validate_simplex, Compartment, DelayKernel, DelayedSird, ModelParams};
use crate::series::{build_history, slice, DataWindow, EpidemicSeries, WindowedSeries};
use crate::{Error, Result};

/// Which compartments enter the objective and at which fitting days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    compartments: Vec<Compartment>,
    sample_days: Vec<usize>,
    /// Divide each compartment's sum by that compartment's `Σ measured²`.
    #[serde(default)]
    normalized: bool,
}

impl ObjectiveSpec {
    pub fn new(compartments: &[Compartment], sample_days: Vec<usize>) -> Result<Self> {
        let mut compartments = compartments.to_vec();
        compartments.sort();
        compartments.dedup();
        if compartments.is_empty() {
            return Err(Error::invalid("objective.compartments", "at least one compartment required"));
        }
        if sample_days.is_empty() {
            return Err(Error::invalid("objective.sample_days", "at least one sample day required"));
        }
        Ok(ObjectiveSpec {
            compartments,
            sample_days,
            normalized: false,
        })
    }

    /// Every day `0..n_days` of the fitting window.
    pub fn daily(compartments: &[Compartment], n_days: usize) -> Result<Self> {
        ObjectiveSpec::new(compartments, (0..n_days).collect())
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalized = on;
        self
    }

    pub fn compartments(&self) -> &[Compartment] {
        &self.compartments
    }

    pub fn sample_days(&self) -> &[usize] {
        &self.sample_days
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Objective value for already simulated states, indexed by fitting day.
    pub fn evaluate(&self, simulated: &[[f64; 4]], measured: &[[f64; 4]]) -> Result<f64> {
        Ok(self.residuals(simulated, measured)?.iter().map(|r| r * r).sum())
    }

    /// Residual vector whose squared norm is the objective; compartments
    /// in order, sample days within each.
    pub fn residuals(&self, simulated: &[[f64; 4]], measured: &[[f64; 4]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.compartments.len() * self.sample_days.len());
        for &c in &self.compartments {
            let n = c.index();
            let first = out.len();
            let mut scale = 0.0;
            for &day in &self.sample_days {
                let (sim, meas) = match (simulated.get(day), measured.get(day)) {
                    (Some(s), Some(m)) => (s[n], m[n]),
                    _ => {
                        return Err(Error::invalid(
                            "objective.sample_days",
                            alloc::format!("day {day} outside the simulated span"),
                        ))
                    }
                };
                out.push(sim - meas);
                scale += meas * meas;
            }
            if self.normalized {
                if scale == 0.0 {
                    return Err(Error::ZeroNorm);
                }
                let inv = 1.0 / sqrt(scale);
                out[first..].iter_mut().for_each(|r| *r *= inv);
            }
        }
        Ok(out)
    }
}

/// Measured window, history and lag grid prepared once per fit.
#[derive(Debug, Clone)]
pub struct FitProblem {
    sigmas: Vec<f64>,
    history: LinearHistory<4>,
    measured: Vec<[f64; 4]>,
    start: NaiveDate,
    solver: SolverConfig,
}

impl FitProblem {
    pub fn new(
        series: &EpidemicSeries,
        window: &DataWindow,
        sigmas: Vec<f64>,
        solver: SolverConfig,
    ) -> Result<Self> {
        let windowed = slice(series, window)?;
        FitProblem::from_windowed(&windowed, sigmas, solver)
    }

    pub fn from_windowed(
        windowed: &WindowedSeries,
        sigmas: Vec<f64>,
        solver: SolverConfig,
    ) -> Result<Self> {
        validate_sigmas(&sigmas)?;
        solver.validate()?;
        if windowed.fit_days() < 2 {
            return Err(Error::invalid("window", "at least two fitting days required"));
        }
        let max_lag = sigmas[sigmas.len() - 1];
        let history = build_history(windowed.combined(), windowed.t0_index(), max_lag)?;
        let measured = (0..windowed.fit_days())
            .map(|d| windowed.fit_state(d).to_array())
            .collect();
        Ok(FitProblem {
            sigmas,
            history,
            measured,
            start: windowed.combined().date(windowed.t0_index()),
            solver,
        })
    }

    /// Uses the given history and measurements directly (synthetic studies).
    pub fn from_parts(
        sigmas: Vec<f64>,
        history: LinearHistory<4>,
        measured: Vec<[f64; 4]>,
        start: NaiveDate,
        solver: SolverConfig,
    ) -> Result<Self> {
        validate_sigmas(&sigmas)?;
        solver.validate()?;
        if measured.len() < 2 {
            return Err(Error::invalid("window", "at least two fitting days required"));
        }
        Ok(FitProblem {
            sigmas,
            history,
            measured,
            start,
            solver,
        })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn n_days(&self) -> usize {
        self.measured.len()
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn measured(&self) -> &[[f64; 4]] {
        &self.measured
    }

    pub fn history(&self) -> &LinearHistory<4> {
        &self.history
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn with_measured(&self, measured: Vec<[f64; 4]>) -> Result<Self> {
        if measured.len() != self.measured.len() {
            return Err(Error::LengthMismatch {
                left: self.measured.len(),
                right: measured.len(),
            });
        }
        Ok(FitProblem {
            measured,
            ..self.clone()
        })
    }

    fn t_end(&self) -> f64 {
        (self.measured.len() - 1) as f64
    }

    /// Integrates once over the window; `weights` may lie off the simplex.
    pub fn trajectory(
        &self,
        params: &ModelParams,
        weights: &[f64],
    ) -> Result<Trajectory<4, LinearHistory<4>>> {
        solve_window(params, weights, &self.sigmas, self.history.clone(), self.t_end(), &self.solver)
    }

    /// Integrates with the fixed steps of `mesh` instead of error control.
    pub fn trajectory_on(
        &self,
        params: &ModelParams,
        weights: &[f64],
        mesh: &StepMesh,
    ) -> Result<Trajectory<4, LinearHistory<4>>> {
        if weights.len() != self.sigmas.len() {
            return Err(Error::LengthMismatch {
                left: self.sigmas.len(),
                right: weights.len(),
            });
        }
        let system = DelayedSird { params, weights };
        integrate_on_mesh(&system, self.history.clone(), &self.sigmas, mesh)
    }

    /// States at every fitting day `0..n_days`.
    pub fn simulate(&self, params: &ModelParams, weights: &[f64]) -> Result<Vec<[f64; 4]>> {
        let traj = self.trajectory(params, weights)?;
        self.daily(&traj)
    }

    fn daily(&self, traj: &Trajectory<4, LinearHistory<4>>) -> Result<Vec<[f64; 4]>> {
        (0..self.n_days()).map(|d| traj.eval(d as f64)).collect()
    }

    pub fn objective(&self, params: &ModelParams, weights: &[f64], spec: &ObjectiveSpec) -> Result<f64> {
        let sim = self.simulate(params, weights)?;
        spec.evaluate(&sim, &self.measured)
    }

    /// Objective on a frozen mesh: smooth in `weights`, unlike [`Self::objective`].
    pub fn objective_on(
        &self,
        params: &ModelParams,
        weights: &[f64],
        spec: &ObjectiveSpec,
        mesh: &StepMesh,
    ) -> Result<f64> {
        let sim = self.daily(&self.trajectory_on(params, weights, mesh)?)?;
        spec.evaluate(&sim, &self.measured)
    }

    fn residuals_on(
        &self,
        params: &ModelParams,
        weights: &[f64],
        spec: &ObjectiveSpec,
        mesh: &StepMesh,
    ) -> Result<Vec<f64>> {
        let sim = self.daily(&self.trajectory_on(params, weights, mesh)?)?;
        spec.residuals(&sim, &self.measured)
    }

    /// Relative L² error of each of s, i, r, d over all fitting days.
    pub fn compartment_errors(&self, simulated: &[[f64; 4]]) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for c in Compartment::ALL {
            let sim: Vec<f64> = simulated.iter().map(|s| s[c.index()]).collect();
            let meas: Vec<f64> = self.measured.iter().map(|s| s[c.index()]).collect();
            out[c.index()] = relative_l2_error(&sim, &meas)?;
        }
        Ok(out)
    }
}

/// Integrates the delayed model on `[0, t_end]` from `history`, with every
/// β breakpoint inside the span forced as a step endpoint. `weights` may
/// lie off the simplex.
pub fn solve_window<H: History<4>>(
    params: &ModelParams,
    weights: &[f64],
    sigmas: &[f64],
    history: H,
    t_end: f64,
    solver: &SolverConfig,
) -> Result<Trajectory<4, H>> {
    if weights.len() != sigmas.len() {
        return Err(Error::LengthMismatch {
            left: sigmas.len(),
            right: weights.len(),
        });
    }
    let mut cfg = solver.clone();
    cfg.forced_breakpoints.extend(
        params
            .beta_schedule
            .breakpoints()
            .iter()
            .map(|(t, _)| *t)
            .filter(|t| *t > 0.0 && *t < t_end),
    );
    cfg.forced_breakpoints.retain(|t| *t >= 0.0 && *t <= t_end);
    let system = DelayedSird { params, weights };
    integrate(&system, history, (0.0, t_end), sigmas, &cfg)
}

/// Compartment values at the fitting days, produced by one integration.
pub fn simulate(
    params: &ModelParams,
    kernel: &DelayKernel,
    series: &EpidemicSeries,
    window: &DataWindow,
    config: &SolverConfig,
) -> Result<Vec<[f64; 4]>> {
    FitProblem::new(series, window, kernel.sigmas().to_vec(), config.clone())?
        .simulate(params, kernel.weights())
}

pub fn objective(
    weights: &[f64],
    sigmas: &[f64],
    params: &ModelParams,
    spec: &ObjectiveSpec,
    series: &EpidemicSeries,
    window: &DataWindow,
    config: &SolverConfig,
) -> Result<f64> {
    FitProblem::new(series, window, sigmas.to_vec(), config.clone())?.objective(params, weights, spec)
}

/// `‖sim − meas‖₂ / ‖meas‖₂`.
pub fn relative_l2_error(sim: &[f64], meas: &[f64]) -> Result<f64> {
    if sim.len() != meas.len() {
        return Err(Error::LengthMismatch {
            left: sim.len(),
            right: meas.len(),
        });
    }
    if sim.is_empty() {
        return Err(Error::invalid("relative_l2_error", "empty series"));
    }
    let den = norm2(meas);
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let num = sqrt(sim.iter().zip(meas).map(|(a, b)| (a - b) * (a - b)).sum());
    Ok(num / den)
}

/// Euclidean projection onto `{w : w_j ≥ 0, Σ w_j = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    // one correction pass keeps the sum at 1 to rounding
    let sum: f64 = w.iter().sum();
    if sum > 0.0 && sum != 1.0 {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    w
}

/// `‖w − P(w − g)‖ / ‖g‖`; zero exactly at first-order stationary points.
pub fn kkt_residual(weights: &[f64], gradient: &[f64]) -> f64 {
    let gnorm = norm2(gradient);
    if gnorm == 0.0 {
        return 0.0;
    }
    let stepped: Vec<f64> = weights.iter().zip(gradient).map(|(w, g)| w - g).collect();
    let p = project_simplex(&stepped);
    let diff: Vec<f64> = weights.iter().zip(&p).map(|(a, b)| a - b).collect();
    norm2(&diff) / gnorm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Forward-difference step per weight.
    pub fd_step: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_iter: 200,
            fd_step: 1e-6,
            armijo: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: Vec<f64>,
    /// Persons² (unnormalized unless the spec says otherwise).
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of integrations performed.
    pub evaluations: usize,
    /// Objective at the initial iterate, after each accepted iteration, and
    /// at every re-meshed restart. Non-increasing within each mesh pass.
    pub objective_trace: Vec<f64>,
    /// Index into `objective_trace` where each mesh pass begins; the first
    /// is 0. A new mesh can move the value at unchanged weights by solver
    /// noise, so the trace may rise across a pass boundary.
    pub pass_starts: Vec<usize>,
}

struct Evaluator<'a> {
    problem: &'a FitProblem,
    params: &'a ModelParams,
    spec: &'a ObjectiveSpec,
    mesh: StepMesh,
    count: usize,
}

impl Evaluator<'_> {
    fn residuals(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        self.count += 1;
        self.problem.residuals_on(self.params, w, self.spec, &self.mesh)
    }

    /// Re-solves adaptively at `w` and freezes the resulting mesh. Replaying
    /// a mesh is exact, so the residuals also hold on the frozen mesh.
    fn remesh(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        self.count += 1;
        let traj = self.problem.trajectory(self.params, w)?;
        self.mesh = traj.mesh();
        self.spec.residuals(&self.problem.daily(&traj)?, &self.problem.measured)
    }

    /// Difference columns `∂r/∂w_j`: forward (one integration per weight)
    /// or central (two).
    fn jacobian(&mut self, w: &[f64], r: &[f64], h: f64, central: bool) -> Result<Vec<Vec<f64>>> {
        let mut probe = w.to_vec();
        let mut cols = Vec::with_capacity(w.len());
        for j in 0..w.len() {
            let tag = |e| Error::Probe {
                probe: j,
                source: Box::new(e),
            };
            probe[j] = w[j] + h;
            let up = self.residuals(&probe).map_err(tag)?;
            let col = if central {
                probe[j] = w[j] - h;
                let down = self.residuals(&probe).map_err(tag)?;
                up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            } else {
                up.iter().zip(r).map(|(a, b)| (a - b) / h).collect()
            };
            probe[j] = w[j];
            cols.push(col);
        }
        Ok(cols)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Mesh refreshes before a fit is reported as it stands.
pub const MAX_MESH_PASSES: usize = 4;

const DAMPING_INIT: f64 = 1e-3;
const DAMPING_MIN: f64 = 1e-12;
const DAMPING_MAX: f64 = 1e8;
const DAMPING_RETRIES: usize = 4;
/// Relative change of the objective below which rounding in the
/// integrated residuals dominates.
const F_RESOLUTION: f64 = 1e-13;
/// Scaled objective at or below which the fit is exact to working
/// precision. Such a point is a global minimum since the objective is
/// non-negative, while its difference gradient is pure rounding.
const EXACT_FIT: f64 = f64::EPSILON;
const QP_MAX_ITER: usize = 1_000;

/// Minimizes the objective over the simplex starting from `init`.
///
/// Each pass freezes the step mesh of an adaptive solve at its starting
/// point and minimizes the fixed-mesh objective, so finite differences see a
/// smooth function. The next pass re-meshes at the result; the fit ends once
/// a fresh mesh satisfies the tolerance without further iterations.
///
/// Steps are damped Gauss–Newton: a difference Jacobian of the residuals
/// gives both the gradient `2 Jᵀr` and a local quadratic model, which is
/// minimized over the simplex; an Armijo search along the result keeps the
/// descent monotone. Forward differences switch to central ones once forward
/// steps stall.
pub fn fit_weights(
    problem: &FitProblem,
    params: &ModelParams,
    spec: &ObjectiveSpec,
    init: &[f64],
    options: &FitOptions,
) -> Result<FitResult> {
    if init.len() != problem.sigmas().len() {
        return Err(Error::LengthMismatch {
            left: problem.sigmas().len(),
            right: init.len(),
        });
    }
    validate_simplex(init)?;
    if !(options.tol > 0.0) || !(options.fd_step > 0.0) {
        return Err(Error::invalid("fit", "tol and fd_step must be > 0"));
    }
    let traj = problem.trajectory(params, init)?;
    let mut r = spec.residuals(&problem.daily(&traj)?, &problem.measured)?;
    let mut eval = Evaluator {
        problem,
        params,
        spec,
        mesh: traj.mesh(),
        count: 1,
    };
    let f0 = sum_sq(&r);
    let mut w = init.to_vec();
    let mut trace = alloc::vec![f0];
    if w.len() == 1 || f0 == 0.0 {
        return Ok(FitResult {
            weights: w,
            objective_value: f0,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
            evaluations: eval.count,
            objective_trace: trace,
            pass_starts: alloc::vec![0],
        });
    }

    let mut state = Descent {
        damping: DAMPING_INIT,
        central: false,
        iterations: 0,
    };
    let mut kkt = f64::INFINITY;
    let mut moved = true;
    let mut pass_starts = alloc::vec![0];
    for pass in 0..MAX_MESH_PASSES {
        if pass > 0 {
            r = eval.remesh(&w)?;
            pass_starts.push(trace.len());
            trace.push(sum_sq(&r));
        }
        let before = state.iterations;
        // f / f0 keeps step lengths and the residual scale free
        kkt = descend(&mut eval, &mut w, &mut r, f0, options, &mut state, &mut trace)?;
        moved = state.iterations > before;
        if (kkt <= options.tol && !moved) || state.iterations >= options.max_iter {
            break;
        }
    }
    let objective_value = if moved {
        eval.count += 1;
        problem.objective(params, &w, spec)?
    } else {
        sum_sq(&r)
    };
    Ok(FitResult {
        weights: w,
        objective_value,
        kkt_residual: kkt,
        iterations: state.iterations,
        converged: kkt <= options.tol,
        evaluations: eval.count,
        objective_trace: trace,
        pass_starts,
    })
}

struct Descent {
    /// Levenberg damping relative to the mean diagonal of `JᵀJ`.
    damping: f64,
    /// Central instead of forward differences, once forward steps stall.
    central: bool,
    iterations: usize,
}

/// Iterates on the frozen mesh held by `eval` until the KKT residual meets
/// the tolerance, the iteration budget runs out, or no decrease is
/// resolvable. Returns the KKT residual at the final iterate.
fn descend(
    eval: &mut Evaluator<'_>,
    w: &mut Vec<f64>,
    r: &mut Vec<f64>,
    scale: f64,
    options: &FitOptions,
    state: &mut Descent,
    trace: &mut Vec<f64>,
) -> Result<f64> {
    let k = w.len();
    loop {
        let f = sum_sq(r) / scale;
        if f <= EXACT_FIT {
            return Ok(0.0);
        }
        let cols = eval.jacobian(w, r, options.fd_step, state.central)?;
        let mut gram = alloc::vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let v = dot(&cols[a], &cols[b]);
                gram[a * k + b] = v;
                gram[b * k + a] = v;
            }
        }
        let jtr: Vec<f64> = cols.iter().map(|c| dot(c, r)).collect();
        let g: Vec<f64> = jtr.iter().map(|x| 2.0 * x / scale).collect();
        let kkt = kkt_residual(w, &g);
        if kkt <= options.tol || state.iterations >= options.max_iter {
            return Ok(kkt);
        }

        let mean_diag = (0..k).map(|a| gram[a * k + a]).sum::<f64>() / k as f64;
        let mut accepted = None;
        // a failed search retries with heavier damping, which turns the step
        // towards projected steepest descent
        for _ in 0..DAMPING_RETRIES {
            let mu = state.damping * mean_diag;
            let target = solve_model(&gram, &jtr, mu, w);
            let d: Vec<f64> = target.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                break;
            }
            let mut lambda = 1.0;
            for _ in 0..=options.max_backtracks {
                let cand: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| (wi + lambda * di).max(0.0)).collect();
                let rc = eval.residuals(&cand)?;
                // change in f from residual differences; resolves decreases
                // far below the rounding of f itself
                let df = rc.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a + b)).sum::<f64>() / scale;
                // below F_RESOLUTION the predicted decrease is not
                // meaningful in f64; such steps stand if f does not rise
                let unresolved = -slope * lambda <= F_RESOLUTION * f && df <= 0.0;
                if df <= options.armijo * lambda * slope || unresolved {
                    accepted = Some((cand, rc, f + df, lambda));
                    break;
                }
                lambda *= 0.5;
            }
            if accepted.is_some() || state.damping >= DAMPING_MAX {
                break;
            }
            state.damping = (state.damping * 100.0).min(DAMPING_MAX);
        }
        let Some((w_new, r_new, f_new, lambda)) = accepted else {
            if !state.central {
                // forward differences are at their accuracy floor
                state.central = true;
                state.damping = DAMPING_INIT;
                continue;
            }
            return Ok(kkt);
        };
        state.damping = if lambda == 1.0 {
            state.damping / 3.0
        } else {
            state.damping * 4.0
        }
        .clamp(DAMPING_MIN, DAMPING_MAX);
        *w = w_new;
        *r = r_new;
        state.iterations += 1;
        trace.push(f_new * scale);
    }
}

/// Minimizes `dᵀ(G + μI)d + 2bᵀd` over `d = v − w` with `v` on the simplex
/// and returns `v`. Primal active-set method started at `w`; `G` is
/// symmetric positive semidefinite, `μ > 0`, so every face problem is
/// strictly convex and each iterate lowers the model.
fn solve_model(gram: &[f64], b: &[f64], mu: f64, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    // q(v) = ½ vᵀHv + cᵀv with H = 2(G + μI), c = 2(b − (G + μI)w)
    let h = |i: usize, j: usize| 2.0 * (gram[i * k + j] + if i == j { mu } else { 0.0 });
    let c: Vec<f64> = (0..k)
        .map(|i| 2.0 * (b[i] - (0..k).map(|j| h(i, j) * 0.5 * w[j]).sum::<f64>()))
        .collect();
    let mut v = w.to_vec();
    let mut free: Vec<bool> = v.iter().map(|x| *x > 0.0).collect();
    for _ in 0..QP_MAX_ITER {
        let idx: Vec<usize> = (0..k).filter(|&j| free[j]).collect();
        let n = idx.len();
        // face optimum: [H_FF 1; 1ᵀ 0] [v_F; ν] = [−c_F; 1]
        let mut m = alloc::vec![0.0; (n + 1) * (n + 2)];
        let cols = n + 2;
        for (a, &i) in idx.iter().enumerate() {
            for (bb, &j) in idx.iter().enumerate() {
                m[a * cols + bb] = h(i, j);
            }
            m[a * cols + n] = 1.0;
            m[a * cols + n + 1] = -c[i];
            m[n * cols + a] = 1.0;
        }
        m[n * cols + n + 1] = 1.0;
        let Some(sol) = solve_dense(&mut m, n + 1) else {
            return v;
        };
        let nu = sol[n];
        let mut target = alloc::vec![0.0; k];
        for (a, &i) in idx.iter().enumerate() {
            target[i] = sol[a];
        }
        let step: Vec<f64> = (0..k).map(|j| target[j] - v[j]).collect();
        let size = step.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if size <= 1e-15 {
            // stationary on the face: release the most negative multiplier
            let mut worst = None;
            for j in (0..k).filter(|&j| !free[j]) {
                let grad_j = (0..k).map(|l| h(j, l) * v[l]).sum::<f64>() + c[j];
                let lam = grad_j + nu;
                if lam < -1e-14 * (1.0 + grad_j.abs()) && worst.is_none_or(|(_, best)| lam < best) {
                    worst = Some((j, lam));
                }
            }
            match worst {
                Some((j, _)) => free[j] = true,
                None => return v,
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &j in &idx {
            if step[j] < 0.0 {
                let a = -v[j] / step[j];
                if a < alpha {
                    alpha = a;
                    blocking = Some(j);
                }
            }
        }
        for j in 0..k {
            v[j] += alpha * step[j];
        }
        if let Some(j) = blocking {
            v[j] = 0.0;
            free[j] = false;
        }
        for j in 0..k {
            if !free[j] || v[j] < 0.0 {
                v[j] = 0.0;
            }
        }
    }
    v
}

/// Gaussian elimination with partial pivoting on an `n × (n + 1)`
/// augmented matrix stored row-major.
fn solve_dense(m: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let cols = n + 1;
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a * cols + col].abs().total_cmp(&m[b * cols + col].abs()))?;
        if m[pivot * cols + col] == 0.0 || !m[pivot * cols + col].is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..cols {
                m.swap(col * cols + j, pivot * cols + j);
            }
        }
        let p = m[col * cols + col];
        for row in col + 1..n {
            let factor = m[row * cols + col] / p;
            if factor != 0.0 {
                for j in col..cols {
                    m[row * cols + j] -= factor * m[col * cols + j];
                }
            }
        }
    }
    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row * cols + n];
        for j in row + 1..n {
            acc -= m[row * cols + j] * x[j];
        }
        x[row] = acc / m[row * cols + row];
    }
    Some(x)
}

/// Fits with the spec's defaults: uniform start, [`FitOptions::default`].
pub fn fit_weights_uniform(
    problem: &FitProblem,
    params: &ModelParams,
    spec: &ObjectiveSpec,
) -> Result<FitResult> {
    let k = problem.sigmas().len();
    let init = alloc::vec![1.0 / k as f64; k];
    fit_weights(problem, params, spec, &init, &FitOptions::default())
}
