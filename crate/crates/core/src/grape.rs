//! Concurrent gradient optimizers: conjugate-gradient and BFGS searches
//! over the whole control trajectory at once, in the L2 or H1 norm.
//!
//! One iteration solves the forward equation for every trial control of
//! a line search along the current direction, accepts the first
//! sufficiently good minimizer, then solves the backward equation once
//! at the accepted point to obtain the next gradient. All inner
//! products (descent slopes, curvature guards, BFGS updates) are taken
//! in the configured norm, so the H1 variant is the same algorithm run
//! in a smoother geometry.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::dynamics::{terminal_costate, EquationCounter, Propagator, Trajectory};
use crate::error::ModelError;
use crate::functional::grape_penalty;
use crate::gradient::{dot, gradient_h1, gradient_l2, GradientNorm};
use crate::problem::Problem;
use crate::trace::{IterationRecord, OptimizerOutcome, RunTrace, SchemeTag, TerminationStatus};
use crate::wavefunction::FieldRole;

/// Which search direction update the optimizer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    ConjugateGradient,
    Bfgs,
}

/// Line-search settings. `c1` is the sufficient-decrease constant, `c2`
/// the curvature threshold used to stop refining once the function has
/// flattened along the direction, `max_trials` the cap on forward
/// solves per search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchParams {
    pub c1: f64,
    pub c2: f64,
    pub max_trials: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_trials: 12,
        }
    }
}

/// Full configuration of a concurrent-optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrapeConfig {
    pub search: SearchMethod,
    pub norm: GradientNorm,
    /// Weight of the derivative penalty.
    pub gamma: f64,
    #[serde(default)]
    pub line_search: LineSearchParams,
    /// Total solve budget (forward plus backward).
    pub max_equations: u64,
    /// Stop once the terminal cost drops below this value.
    pub stop_jt: f64,
    /// Store a control snapshot every this many iterations.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    5
}

impl GrapeConfig {
    pub fn new(search: SearchMethod, norm: GradientNorm) -> Self {
        Self {
            search,
            norm,
            gamma: 1e-6,
            line_search: LineSearchParams::default(),
            max_equations: 2000,
            stop_jt: 1e-3,
            snapshot_every: default_snapshot_every(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ls = &self.line_search;
        if !(0.0 < ls.c1 && ls.c1 < ls.c2 && ls.c2 < 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "line search needs 0 < c1 < c2 < 1 (got c1 = {}, c2 = {})",
                ls.c1, ls.c2
            )));
        }
        if ls.max_trials < 2 {
            return Err(ModelError::InvalidConfig(
                "line search needs at least two trials".into(),
            ));
        }
        if self.max_equations == 0 {
            return Err(ModelError::InvalidConfig(
                "equation budget must be positive".into(),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "gamma = {} must be non-negative",
                self.gamma
            )));
        }
        if !(self.stop_jt.is_finite() && self.stop_jt >= 0.0) {
            return Err(ModelError::InvalidConfig(
                "stop_jt must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the configured optimizer from the given guess.
pub fn optimize_grape(
    problem: &Problem,
    guess: &ControlField,
    config: &GrapeConfig,
) -> Result<OptimizerOutcome, ModelError> {
    config.validate()?;
    let mut counter = EquationCounter::new();
    let mut trace = RunTrace::new();
    let control = run_loop(problem, guess, config, &mut counter, &mut trace, 0)?;
    Ok(OptimizerOutcome {
        control,
        trace,
        counter,
    })
}

/// One fully evaluated trial control.
struct TrialEval {
    alpha: f64,
    j_terminal: f64,
    penalty: f64,
    j_total: f64,
    control: ControlField,
    trajectory: Trajectory,
}

enum LineSearchOutcome {
    Accepted(TrialEval),
    NoImprovement,
    BudgetExhausted(Option<TrialEval>),
}

struct GrapeRun<'a> {
    problem: &'a Problem,
    prop: Propagator,
    config: &'a GrapeConfig,
    counter: &'a mut EquationCounter,
    dt: f64,
}

impl<'a> GrapeRun<'a> {
    fn remaining(&self) -> u64 {
        self.config
            .max_equations
            .saturating_sub(self.counter.n_total())
    }

    fn metric_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(self.config.norm, a, b, self.dt)
    }

    /// Evaluates the control `base + alpha * direction`; `None` when the
    /// solve budget is exhausted.
    fn evaluate_trial(
        &mut self,
        base: &ControlField,
        direction: &[f64],
        alpha: f64,
    ) -> Result<Option<TrialEval>, ModelError> {
        if self.remaining() == 0 {
            return Ok(None);
        }
        let values: Vec<f64> = base
            .values()
            .iter()
            .zip(direction)
            .map(|(v, d)| v + alpha * d)
            .collect();
        let control = ControlField::new(
            base.time_grid().clone(),
            values,
            base.fixed_endpoints(),
        )?;
        let (j_terminal, trajectory) =
            self.problem
                .evaluate_control(&mut self.prop, &control, self.counter)?;
        let penalty = grape_penalty(&control, self.config.gamma);
        Ok(Some(TrialEval {
            alpha,
            j_terminal,
            penalty,
            j_total: j_terminal + penalty,
            control,
            trajectory,
        }))
    }

    /// Gradient field at an accepted point (one backward solve).
    fn gradient(
        &mut self,
        control: &ControlField,
        trajectory: &Trajectory,
    ) -> Result<Vec<f64>, ModelError> {
        let psi_t = trajectory.terminal_state(&self.problem.spec.grid, FieldRole::State)?;
        let p_t = terminal_costate(&psi_t, self.problem.desired_state())?;
        let adjoint = self
            .prop
            .propagate_adjoint(&p_t, trajectory, control, self.counter)?;
        let l2 = gradient_l2(control, &adjoint, self.config.gamma);
        let field = match self.config.norm {
            GradientNorm::L2 => l2,
            GradientNorm::H1 => gradient_h1(&l2, self.dt),
        };
        Ok(field.values().to_vec())
    }

    /// Value-based line minimization. The step expands while the cost
    /// keeps falling, a bracket around the 1D minimum is formed, then
    /// safeguarded parabolic sectioning refines it; only then is the
    /// step accepted. Every trial costs one forward solve; the backward
    /// equation is solved once afterwards, at the accepted point.
    /// Acceptance requires sufficient decrease (`c1`); sectioning stops
    /// once the bracket is narrow and its secant slope has fallen below
    /// `c2` times the initial slope.
    fn line_search(
        &mut self,
        base: &ControlField,
        direction: &[f64],
        phi0: f64,
        slope0: f64,
        alpha_init: f64,
    ) -> Result<LineSearchOutcome, ModelError> {
        let params = self.config.line_search;
        let armijo = |alpha: f64, phi: f64| phi <= phi0 + params.c1 * alpha * slope0;
        let mut trials = 0usize;
        let mut best: Option<TrialEval> = None;

        let consider =
            |trial: TrialEval, best: &mut Option<TrialEval>| -> (f64, f64) {
                let key = (trial.alpha, trial.j_total);
                let better = best
                    .as_ref()
                    .map(|b| trial.j_total < b.j_total)
                    .unwrap_or(true);
                if trial.j_total < phi0 && better {
                    *best = Some(trial);
                }
                key
            };

        // Walk outwards while the cost falls; the first non-improving
        // trial closes a bracket. A failing first trial backtracks with
        // a quadratic fit until an improving step is found.
        let mut prev = (0.0_f64, phi0);
        let mut prev_prev: Option<(f64, f64)> = None;
        let mut alpha = alpha_init.max(f64::MIN_POSITIVE);
        let mut triple: Option<((f64, f64), (f64, f64), (f64, f64))> = None;
        while trials < params.max_trials {
            let Some(trial) = self.evaluate_trial(base, direction, alpha)? else {
                return Ok(LineSearchOutcome::BudgetExhausted(best));
            };
            trials += 1;
            let (a, phi) = consider(trial, &mut best);

            if phi >= prev.1 || !armijo(a, phi) {
                if prev.0 == 0.0 {
                    if alpha < 1e-14 {
                        return Ok(LineSearchOutcome::NoImprovement);
                    }
                    let denom = 2.0 * (phi - phi0 - slope0 * a);
                    let fit = if denom > 0.0 { -slope0 * a * a / denom } else { 0.5 * a };
                    alpha = fit.clamp(0.1 * a, 0.5 * a);
                    continue;
                }
                let lo = prev_prev.unwrap_or((0.0, phi0));
                triple = Some((lo, prev, (a, phi)));
                break;
            }
            prev_prev = Some(prev);
            prev = (a, phi);
            alpha *= 2.0;
        }

        // Sectioning refinement of the bracketed minimum.
        if let Some((mut lo, mut mid, mut hi)) = triple {
            while trials < params.max_trials {
                let width = hi.0 - lo.0;
                let narrow = width <= 0.25 * mid.0;
                let secant = (hi.1 - lo.1) / (hi.0 - lo.0);
                if narrow && secant.abs() <= params.c2 * slope0.abs() && armijo(mid.0, mid.1) {
                    break;
                }
                if width <= 1e-12 * mid.0.max(1.0) {
                    break;
                }
                let mut cand = parabolic_min(lo, mid, hi);
                let margin = 0.05 * width;
                if !(cand.is_finite() && cand > lo.0 + margin && cand < hi.0 - margin)
                    || (cand - mid.0).abs() < margin
                {
                    // golden-section fallback into the larger segment
                    cand = if mid.0 - lo.0 > hi.0 - mid.0 {
                        mid.0 - 0.382 * (mid.0 - lo.0)
                    } else {
                        mid.0 + 0.382 * (hi.0 - mid.0)
                    };
                }
                let Some(trial) = self.evaluate_trial(base, direction, cand)? else {
                    return Ok(LineSearchOutcome::BudgetExhausted(best));
                };
                trials += 1;
                let (a, phi) = consider(trial, &mut best);
                if a < mid.0 {
                    if phi <= mid.1 {
                        hi = mid;
                        mid = (a, phi);
                    } else {
                        lo = (a, phi);
                    }
                } else if phi <= mid.1 {
                    lo = mid;
                    mid = (a, phi);
                } else {
                    hi = (a, phi);
                }
            }
        }

        match best {
            Some(b) if armijo(b.alpha, b.j_total) => Ok(LineSearchOutcome::Accepted(b)),
            _ => Ok(LineSearchOutcome::NoImprovement),
        }
    }
}

fn parabolic_min(lo: (f64, f64), mid: (f64, f64), hi: (f64, f64)) -> f64 {
    let (a, fa) = lo;
    let (b, fb) = mid;
    let (c, fc) = hi;
    let num = (b - a) * (b - a) * (fb - fc) - (b - c) * (b - c) * (fb - fa);
    let den = (b - a) * (fb - fc) - (b - c) * (fb - fa);
    if den.abs() < 1e-300 {
        return f64::NAN;
    }
    b - 0.5 * num / den
}

/// Dense BFGS state over the control nodes, with all contractions taken
/// in the configured norm.
struct BfgsState {
    h: Option<Array2<f64>>,
    n: usize,
}

impl BfgsState {
    fn new(n: usize) -> Self {
        Self { h: None, n }
    }

    fn reset(&mut self) {
        self.h = None;
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        match &self.h {
            None => g.iter().map(|v| -v).collect(),
            Some(h) => {
                let mut d = vec![0.0; self.n];
                let hs = h.as_slice().expect("row-major layout");
                for (i, di) in d.iter_mut().enumerate() {
                    let row = &hs[i * self.n..(i + 1) * self.n];
                    *di = -row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                }
                d
            }
        }
    }

    /// Inverse-Hessian update from step `s` and gradient change `y`.
    /// Returns false (and leaves the state unchanged) when the
    /// curvature `<y, s>` is not safely positive.
    fn update(&mut self, s: &[f64], y: &[f64], norm: GradientNorm, dt: f64) -> bool {
        let ys = dot(norm, y, s, dt);
        let yy = dot(norm, y, y, dt);
        let ss = dot(norm, s, s, dt);
        if !(ys > 1e-12 * (yy * ss).sqrt()) {
            return false;
        }
        let n = self.n;
        if self.h.is_none() {
            // scale the initial inverse Hessian to the observed curvature
            let scale = ys / yy;
            let mut h = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                h[[i, i]] = scale;
            }
            self.h = Some(h);
        }
        let h = self.h.as_mut().expect("initialized above");
        let rho = 1.0 / ys;

        // hy = H y, then rank-one corrections; M denotes the metric.
        let hs = h.as_slice_mut().expect("row-major layout");
        let mut hy = vec![0.0; n];
        for i in 0..n {
            let row = &hs[i * n..(i + 1) * n];
            hy[i] = row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        }
        let m_hy = metric_apply(norm, &hy, dt);
        let m_s = metric_apply(norm, s, dt);
        let y_hy = dot(norm, &hy, y, dt);
        let c = rho * (1.0 + rho * y_hy);
        for i in 0..n {
            let row = &mut hs[i * n..(i + 1) * n];
            let si = s[i];
            let hyi = hy[i];
            for j in 0..n {
                row[j] += -rho * (si * m_hy[j] + hyi * m_s[j]) + c * si * m_s[j];
            }
        }
        true
    }
}

/// Applies the Gram operator of the configured inner product, so that
/// `dot(norm, a, b) == sum_i a_i * metric_apply(norm, b)_i` for fields
/// vanishing at the endpoints.
fn metric_apply(norm: GradientNorm, v: &[f64], dt: f64) -> Vec<f64> {
    let n = v.len();
    match norm {
        GradientNorm::L2 => {
            let mut out: Vec<f64> = v.iter().map(|x| x * dt).collect();
            out[0] *= 0.5;
            out[n - 1] *= 0.5;
            out
        }
        GradientNorm::H1 => {
            let mut out = vec![0.0; n];
            for j in 1..n - 1 {
                out[j] = (2.0 * v[j] - v[j - 1] - v[j + 1]) / dt;
            }
            out
        }
    }
}

struct CgState {
    g_prev: Option<Vec<f64>>,
    d_prev: Option<Vec<f64>>,
    since_restart: usize,
    restart_period: usize,
}

impl CgState {
    fn new(restart_period: usize) -> Self {
        Self {
            g_prev: None,
            d_prev: None,
            since_restart: 0,
            restart_period,
        }
    }

    /// Polak-Ribiere direction with non-negative beta and periodic
    /// restarts.
    fn direction(&mut self, g: &[f64], norm: GradientNorm, dt: f64) -> Vec<f64> {
        let steepest: Vec<f64> = g.iter().map(|v| -v).collect();
        let d = match (&self.g_prev, &self.d_prev) {
            (Some(gp), Some(dp)) if self.since_restart < self.restart_period => {
                let diff: Vec<f64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
                let gg_prev = dot(norm, gp, gp, dt);
                let beta = if gg_prev > 0.0 {
                    (dot(norm, g, &diff, dt) / gg_prev).max(0.0)
                } else {
                    0.0
                };
                let cand: Vec<f64> = steepest
                    .iter()
                    .zip(dp)
                    .map(|(s, d)| s + beta * d)
                    .collect();
                if dot(norm, g, &cand, dt) < 0.0 {
                    self.since_restart += 1;
                    cand
                } else {
                    self.since_restart = 0;
                    steepest
                }
            }
            _ => {
                self.since_restart = 0;
                steepest
            }
        };
        self.g_prev = Some(g.to_vec());
        self.d_prev = Some(d.clone());
        d
    }
}

enum DirectionProvider {
    Bfgs(BfgsState),
    Cg(CgState),
}

pub(crate) fn run_loop(
    problem: &Problem,
    start: &ControlField,
    config: &GrapeConfig,
    counter: &mut EquationCounter,
    trace: &mut RunTrace,
    start_iteration: usize,
) -> Result<ControlField, ModelError> {
    let dt = problem.spec.time.dt();
    let n_nodes = start.n_nodes();
    let mut run = GrapeRun {
        problem,
        prop: problem.propagator(),
        config,
        counter,
        dt,
    };

    let begin = std::time::Instant::now();
    let (jt, mut trajectory) = problem.evaluate_control(&mut run.prop, start, run.counter)?;
    let mut current = start.clone();
    let penalty = grape_penalty(&current, config.gamma);
    let mut j_total = jt + penalty;
    let mut record = IterationRecord {
        iteration: start_iteration,
        scheme: SchemeTag::Grape,
        n_forward: run.counter.n_forward(),
        n_backward: run.counter.n_backward(),
        j_terminal: jt,
        j_total,
        penalty,
        step_length: None,
        grad_norm: None,
        k: None,
        newton: None,
        wall_ms: begin.elapsed().as_secs_f64() * 1e3,
    };

    if jt <= config.stop_jt {
        trace.push(record);
        trace.snapshot(start_iteration, current.values());
        trace.status = Some(TerminationStatus::ReachedStopJt);
        return Ok(current);
    }
    if run.remaining() == 0 {
        trace.push(record);
        trace.snapshot(start_iteration, current.values());
        trace.status = Some(TerminationStatus::BudgetExhausted);
        return Ok(current);
    }

    let mut g = run.gradient(&current, &trajectory)?;
    let grad_norm = run.metric_dot(&g, &g).sqrt();
    record.n_backward = run.counter.n_backward();
    record.grad_norm = Some(grad_norm);
    record.wall_ms = begin.elapsed().as_secs_f64() * 1e3;
    trace.push(record);
    trace.snapshot(start_iteration, current.values());

    let mut provider = match config.search {
        SearchMethod::Bfgs => DirectionProvider::Bfgs(BfgsState::new(n_nodes)),
        SearchMethod::ConjugateGradient => DirectionProvider::Cg(CgState::new(n_nodes)),
    };
    let mut alpha_prev: Option<(f64, f64)> = None; // (alpha, slope)
    let control_scale = current
        .values()
        .iter()
        .fold(0.05_f64, |m, v| m.max(v.abs()));

    let mut iteration = start_iteration;
    loop {
        iteration += 1;
        let iter_start = std::time::Instant::now();

        let mut direction = match &mut provider {
            DirectionProvider::Bfgs(b) => b.direction(&g),
            DirectionProvider::Cg(c) => c.direction(&g, config.norm, dt),
        };
        let mut slope0 = run.metric_dot(&g, &direction);
        if slope0 >= 0.0 {
            // not a descent direction: fall back to steepest descent
            if let DirectionProvider::Bfgs(b) = &mut provider {
                b.reset();
            }
            direction = g.iter().map(|v| -v).collect();
            slope0 = -run.metric_dot(&g, &g);
            if slope0 >= 0.0 {
                trace.status = Some(TerminationStatus::LineSearchFailed);
                return Ok(current);
            }
        }

        let d_inf = direction.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if d_inf == 0.0 {
            trace.status = Some(TerminationStatus::LineSearchFailed);
            return Ok(current);
        }
        let alpha_init = match (&provider, alpha_prev) {
            (DirectionProvider::Bfgs(b), Some(_)) if b.h.is_some() => 1.0,
            (_, Some((a, s))) if s < 0.0 && slope0 < 0.0 => (a * s / slope0).clamp(1e-8, 1e8),
            _ => 0.1 * control_scale / d_inf,
        };

        let outcome = run.line_search(&current, &direction, j_total, slope0, alpha_init)?;
        let accepted = match outcome {
            LineSearchOutcome::Accepted(t) => t,
            LineSearchOutcome::NoImprovement => {
                trace.status = Some(TerminationStatus::LineSearchFailed);
                return Ok(current);
            }
            LineSearchOutcome::BudgetExhausted(best) => {
                if let Some(t) = best {
                    if t.j_total < j_total {
                        let costs = AcceptedCosts {
                            alpha: t.alpha,
                            j_terminal: t.j_terminal,
                            penalty: t.penalty,
                            j_total: t.j_total,
                        };
                        push_iteration(trace, iteration, run.counter, &costs, None, iter_start);
                        trace.snapshot(iteration, t.control.values());
                        trace.status = Some(TerminationStatus::BudgetExhausted);
                        return Ok(t.control);
                    }
                }
                trace.status = Some(TerminationStatus::BudgetExhausted);
                return Ok(current);
            }
        };

        debug_assert!(accepted.j_total < j_total, "accepted step must decrease J");
        let TrialEval {
            alpha,
            j_terminal,
            penalty,
            j_total: j_accepted,
            control,
            trajectory: new_trajectory,
        } = accepted;
        alpha_prev = Some((alpha, slope0));
        let step_s: Vec<f64> = direction.iter().map(|d| d * alpha).collect();
        j_total = j_accepted;
        current = control;
        trajectory = new_trajectory;
        let costs = AcceptedCosts {
            alpha,
            j_terminal,
            penalty,
            j_total: j_accepted,
        };

        if j_terminal <= config.stop_jt {
            push_iteration(trace, iteration, run.counter, &costs, None, iter_start);
            trace.snapshot(iteration, current.values());
            trace.status = Some(TerminationStatus::ReachedStopJt);
            return Ok(current);
        }
        if run.remaining() == 0 {
            push_iteration(trace, iteration, run.counter, &costs, None, iter_start);
            trace.snapshot(iteration, current.values());
            trace.status = Some(TerminationStatus::BudgetExhausted);
            return Ok(current);
        }

        let g_new = run.gradient(&current, &trajectory)?;
        match &mut provider {
            DirectionProvider::Bfgs(b) => {
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                b.update(&step_s, &y, config.norm, dt);
            }
            DirectionProvider::Cg(_) => {}
        }
        g = g_new;
        let grad_norm = run.metric_dot(&g, &g).sqrt();
        push_iteration(
            trace,
            iteration,
            run.counter,
            &costs,
            Some(grad_norm),
            iter_start,
        );
        if config.snapshot_every > 0 && iteration % config.snapshot_every == 0 {
            trace.snapshot(iteration, current.values());
        }
        if run.remaining() == 0 {
            trace.snapshot(iteration, current.values());
            trace.status = Some(TerminationStatus::BudgetExhausted);
            return Ok(current);
        }
    }
}

struct AcceptedCosts {
    alpha: f64,
    j_terminal: f64,
    penalty: f64,
    j_total: f64,
}

fn push_iteration(
    trace: &mut RunTrace,
    iteration: usize,
    counter: &EquationCounter,
    accepted: &AcceptedCosts,
    grad_norm: Option<f64>,
    iter_start: std::time::Instant,
) {
    trace.push(IterationRecord {
        iteration,
        scheme: SchemeTag::Grape,
        n_forward: counter.n_forward(),
        n_backward: counter.n_backward(),
        j_terminal: accepted.j_terminal,
        j_total: accepted.j_total,
        penalty: accepted.penalty,
        step_length: Some(accepted.alpha),
        grad_norm,
        k: None,
        newton: None,
        wall_ms: iter_start.elapsed().as_secs_f64() * 1e3,
    });
}
