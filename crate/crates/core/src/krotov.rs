//! Sequential monotonic optimizer and the sequential-to-concurrent
//! hybrid.
//!
//! One iteration sweeps the forward equation from t = 0 to T while
//! updating the control on the fly,
//! `lambda_new(t) = lambda_old(t) + S(t) Re<p(t)|dV/dlambda|psi_new(t)>`,
//! then solves the backward equation once to refresh the co-state. The
//! update at a node therefore depends on all earlier updates. `S(t) =
//! k s(t)` gates the update with a shape function pinned to zero at the
//! boundaries. The potential derivative can be taken at the old control
//! (explicit update) or at the new one, in which case a scalar Newton
//! iteration solves the implicit relation per time step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::dynamics::{terminal_costate, EquationCounter, Propagator, Trajectory};
use crate::error::ModelError;
use crate::functional::{krotov_penalty, make_shape, KrotovCostParams, ShapeKind};
use crate::grape::{self, GrapeConfig};
use crate::problem::Problem;
use crate::trace::{
    IterationRecord, NewtonStats, OptimizerOutcome, RunTrace, SchemeTag, TerminationStatus,
};
use crate::wavefunction::FieldRole;

/// Explicit update or per-step Newton refinement of the implicit one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Explicit,
    Newton,
}

/// Adaptive step-size schedule: start from `k0` and grow by `growth`
/// each iteration until the relative cost decrease per iteration
/// reaches `target_decrease`, then keep the step fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveK {
    pub k0: f64,
    pub growth: f64,
    pub target_decrease: f64,
}

impl Default for AdaptiveK {
    fn default() -> Self {
        Self {
            k0: 1e-4,
            growth: 1.5,
            target_decrease: 0.025,
        }
    }
}

/// Full configuration of a sequential-optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrotovConfig {
    /// Step-size parameter; the starting value when `adaptive` is set.
    pub k: f64,
    #[serde(default = "default_shape_kind")]
    pub shape_kind: ShapeKind,
    #[serde(default = "default_ramp_fraction")]
    pub ramp_fraction: f64,
    pub update_mode: UpdateMode,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default)]
    pub adaptive: Option<AdaptiveK>,
    pub max_equations: u64,
    pub stop_jt: f64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Reserved for a second-order stabilization term acting on the
    /// state change per iteration; not implemented, must stay unset.
    #[serde(default)]
    pub sigma_scale: Option<f64>,
}

fn default_shape_kind() -> ShapeKind {
    ShapeKind::SineRamp
}

fn default_ramp_fraction() -> f64 {
    0.1
}

fn default_newton_tol() -> f64 {
    1e-6
}

fn default_snapshot_every() -> usize {
    5
}

impl KrotovConfig {
    pub fn new(k: f64, update_mode: UpdateMode) -> Self {
        Self {
            k,
            shape_kind: default_shape_kind(),
            ramp_fraction: default_ramp_fraction(),
            update_mode,
            newton_tol: default_newton_tol(),
            adaptive: None,
            max_equations: 2000,
            stop_jt: 1e-3,
            snapshot_every: default_snapshot_every(),
            sigma_scale: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "step size k = {} must be positive",
                self.k
            )));
        }
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return Err(ModelError::InvalidConfig(
                "newton_tol must be positive".into(),
            ));
        }
        if let Some(a) = &self.adaptive {
            if !(a.k0 > 0.0 && a.growth > 1.0 && (0.0..1.0).contains(&a.target_decrease)
                && a.target_decrease > 0.0)
            {
                return Err(ModelError::InvalidConfig(
                    "adaptive schedule needs k0 > 0, growth > 1 and target decrease in (0, 1)"
                        .into(),
                ));
            }
        }
        if self.max_equations == 0 {
            return Err(ModelError::InvalidConfig(
                "equation budget must be positive".into(),
            ));
        }
        if self.sigma_scale.is_some() {
            return Err(ModelError::InvalidConfig(
                "sigma_scale is reserved and not implemented; leave it unset".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the sequential optimizer from the given guess.
pub fn optimize_krotov(
    problem: &Problem,
    guess: &ControlField,
    config: &KrotovConfig,
) -> Result<OptimizerOutcome, ModelError> {
    config.validate()?;
    let mut counter = EquationCounter::new();
    let mut trace = RunTrace::new();
    let control = run_loop(problem, guess, config, &mut counter, &mut trace, 0, None)?;
    Ok(OptimizerOutcome {
        control,
        trace,
        counter,
    })
}

/// Runs the sequential scheme for `switch_after` iterations, then hands
/// the control to the concurrent optimizer with a fresh quasi-Newton
/// state. The concurrent phase treats its equation budget as a cap on
/// the shared counter. With `switch_after = 0` this is exactly the
/// concurrent optimizer; if the sequential phase terminates on its own
/// (budget, threshold, instability) no switch happens.
pub fn optimize_hybrid(
    problem: &Problem,
    guess: &ControlField,
    krotov_config: &KrotovConfig,
    grape_config: &GrapeConfig,
    switch_after: usize,
) -> Result<OptimizerOutcome, ModelError> {
    krotov_config.validate()?;
    grape_config.validate()?;
    let mut counter = EquationCounter::new();
    let mut trace = RunTrace::new();

    let control = if switch_after == 0 {
        grape::run_loop(problem, guess, grape_config, &mut counter, &mut trace, 0)?
    } else {
        let seeded = run_loop(
            problem,
            guess,
            krotov_config,
            &mut counter,
            &mut trace,
            0,
            Some(switch_after),
        )?;
        if trace.status == Some(TerminationStatus::IterationCap) {
            trace.status = None;
            let next = trace.last().map(|r| r.iteration + 1).unwrap_or(0);
            grape::run_loop(problem, &seeded, grape_config, &mut counter, &mut trace, next)?
        } else {
            seeded
        }
    };
    Ok(OptimizerOutcome {
        control,
        trace,
        counter,
    })
}

pub(crate) fn run_loop(
    problem: &Problem,
    start: &ControlField,
    config: &KrotovConfig,
    counter: &mut EquationCounter,
    trace: &mut RunTrace,
    start_iteration: usize,
    max_iterations: Option<usize>,
) -> Result<ControlField, ModelError> {
    let time = &problem.spec.time;
    let shape = make_shape(config.shape_kind, config.ramp_fraction, time)?;
    let mut prop = problem.propagator();
    let budget = config.max_equations;

    let begin = std::time::Instant::now();
    let mut current = start.clone();
    let (jt_prev, traj) = problem.evaluate_control(&mut prop, &current, counter)?;
    let mut k_current = config.adaptive.map(|a| a.k0).unwrap_or(config.k);

    let push_record =
        |trace: &mut RunTrace,
         iteration: usize,
         counter: &EquationCounter,
         jt: f64,
         penalty: f64,
         k: f64,
         newton: Option<NewtonStats>,
         started: std::time::Instant| {
            trace.push(IterationRecord {
                iteration,
                scheme: SchemeTag::Krotov,
                n_forward: counter.n_forward(),
                n_backward: counter.n_backward(),
                j_terminal: jt,
                j_total: jt + penalty,
                penalty,
                step_length: None,
                grad_norm: None,
                k: Some(k),
                newton,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        };

    if jt_prev <= config.stop_jt {
        push_record(trace, start_iteration, counter, jt_prev, 0.0, k_current, None, begin);
        trace.snapshot(start_iteration, current.values());
        trace.status = Some(TerminationStatus::ReachedStopJt);
        return Ok(current);
    }
    if counter.n_total() >= budget {
        push_record(trace, start_iteration, counter, jt_prev, 0.0, k_current, None, begin);
        trace.snapshot(start_iteration, current.values());
        trace.status = Some(TerminationStatus::BudgetExhausted);
        return Ok(current);
    }

    // initial co-state for the first sweep
    let psi_t = traj.terminal_state(&problem.spec.grid, FieldRole::State)?;
    let p_t = terminal_costate(&psi_t, problem.desired_state())?;
    let mut adjoint = prop.propagate_adjoint(&p_t, &traj, &current, counter)?;
    push_record(trace, start_iteration, counter, jt_prev, 0.0, k_current, None, begin);
    trace.snapshot(start_iteration, current.values());

    let mut k_frozen = config.adaptive.is_none();
    let mut halvings = 0u32;
    let mut consecutive_increases = 0u32;
    let mut j_prev = jt_prev;
    let mut best = (jt_prev, current.clone());
    let mut iteration = start_iteration;

    loop {
        if let Some(cap) = max_iterations {
            if iteration - start_iteration >= cap {
                trace.status = Some(TerminationStatus::IterationCap);
                return Ok(current);
            }
        }
        if budget.saturating_sub(counter.n_total()) < 2 {
            trace.status = Some(TerminationStatus::BudgetExhausted);
            return Ok(current);
        }
        iteration += 1;
        let iter_start = std::time::Instant::now();

        let params = KrotovCostParams::new(k_current, shape.clone())?;
        let (new_control, new_traj, newton_stats) = sweep(
            &mut prop,
            problem,
            &current,
            &adjoint.costates,
            &params,
            config.update_mode,
            config.newton_tol,
            counter,
        )?;
        let psi_t = new_traj.terminal_state(&problem.spec.grid, FieldRole::State)?;
        let jt_new = crate::functional::terminal_cost(&psi_t, problem.desired_state())?;
        let penalty = krotov_penalty(&new_control, &current, &params)?;
        let j_new = jt_new + penalty;

        let p_t = terminal_costate(&psi_t, problem.desired_state())?;
        adjoint = prop.propagate_adjoint(&p_t, &new_traj, &new_control, counter)?;

        push_record(
            trace,
            iteration,
            counter,
            jt_new,
            penalty,
            k_current,
            newton_stats,
            iter_start,
        );
        if config.snapshot_every > 0 && iteration % config.snapshot_every == 0 {
            trace.snapshot(iteration, new_control.values());
        }

        if jt_new < best.0 {
            best = (jt_new, new_control.clone());
        }

        // divergence guard: shrink the step after repeated increases
        if j_new > j_prev {
            consecutive_increases += 1;
        } else {
            consecutive_increases = 0;
        }
        if consecutive_increases > 3 {
            halvings += 1;
            trace.k_halvings = halvings;
            consecutive_increases = 0;
            if halvings > 3 {
                trace.status = Some(TerminationStatus::Unstable);
                trace.snapshot(iteration, best.1.values());
                return Ok(best.1);
            }
            k_current *= 0.5;
            k_frozen = true;
            log::warn!(
                "sequential update diverging; halving k to {k_current:.3e} (halving {halvings})"
            );
        }

        if !k_frozen {
            if let Some(a) = &config.adaptive {
                let rel = (j_prev - j_new) / j_prev.abs().max(f64::MIN_POSITIVE);
                if rel >= a.target_decrease {
                    k_frozen = true;
                } else {
                    k_current *= a.growth;
                }
            }
        }

        current = new_control;
        j_prev = j_new;

        if jt_new <= config.stop_jt {
            trace.snapshot(iteration, current.values());
            trace.status = Some(TerminationStatus::ReachedStopJt);
            return Ok(current);
        }
    }
}

/// One forward sweep with on-the-fly control updates. Marches the new
/// state through each step: the mid-step field (after the leading half
/// kinetic step) and the node-averaged co-state form the update inner
/// product, the new node value is fixed, and the state advances under
/// the updated mid-step control. Returns the updated control, the new
/// trajectory and Newton statistics.
#[allow(clippy::too_many_arguments)]
fn sweep(
    prop: &mut Propagator,
    problem: &Problem,
    old_control: &ControlField,
    costates: &Trajectory,
    params: &KrotovCostParams,
    mode: UpdateMode,
    newton_tol: f64,
    counter: &mut EquationCounter,
) -> Result<(ControlField, Trajectory, Option<NewtonStats>), ModelError> {
    let grid = &problem.spec.grid;
    let time = &problem.spec.time;
    let n_steps = time.n_steps();
    let n_points = grid.n_points();
    let dx = grid.dx();
    let x = grid.points();
    let potential = problem.spec.potential.clone();
    let fixed_endpoints = old_control.fixed_endpoints();

    let mut state = problem.initial_state().amplitudes().to_vec();
    let mut traj_data: Vec<Complex64> = Vec::with_capacity(n_points * time.n_nodes());
    traj_data.extend_from_slice(&state);

    let mut new_values = vec![0.0; time.n_nodes()];
    new_values[0] = old_control.values()[0];

    let mut weights = vec![0.0; n_points]; // Re(conj(p_mid) * phi_mid) per point
    let mut iter_total = 0u64;
    let mut iter_max = 0u32;
    let mut fallbacks = 0u32;

    for i in 0..n_steps {
        prop.apply_half_kinetic(&mut state);

        let p_lo = costates.node(i);
        let p_hi = costates.node(i + 1);
        for j in 0..n_points {
            let p_mid = 0.5 * (p_lo[j] + p_hi[j]);
            weights[j] = (p_mid.conj() * state[j]).re;
        }
        let coupling = |lambda: f64, second: bool| -> f64 {
            let mut acc = 0.0;
            for j in 0..n_points {
                let w = if second {
                    potential.d2_lambda_at(x[j], lambda)
                } else {
                    potential.d_lambda_at(x[j], lambda)
                };
                acc += w * weights[j];
            }
            acc * dx
        };

        let base = old_control.values()[i + 1];
        let s_node = params.big_s(i + 1);
        let pinned = fixed_endpoints && i + 1 == n_steps;
        let lambda_new = if s_node == 0.0 || pinned {
            base
        } else {
            match mode {
                UpdateMode::Explicit => base + s_node * coupling(base, false),
                UpdateMode::Newton => {
                    let (lambda, iters, fell_back) =
                        newton_update(base, s_node, newton_tol, &coupling);
                    iter_total += iters as u64;
                    iter_max = iter_max.max(iters);
                    if fell_back {
                        fallbacks += 1;
                    }
                    lambda
                }
            }
        };
        if !lambda_new.is_finite() {
            return Err(ModelError::NonFinite(format!(
                "sequential control update at node {}",
                i + 1
            )));
        }
        new_values[i + 1] = lambda_new;

        let lambda_mid = 0.5 * (new_values[i] + lambda_new);
        potential.check_lambda(lambda_mid)?;
        prop.apply_phase_step(&mut state, lambda_mid);
        prop.apply_half_kinetic(&mut state);
        traj_data.extend_from_slice(&state);
    }
    counter.record_forward();

    let control = ControlField::new(time.clone(), new_values, fixed_endpoints)?;
    let trajectory = Trajectory::from_parts(n_points, time.n_nodes(), traj_data);
    let stats = match mode {
        UpdateMode::Explicit => None,
        UpdateMode::Newton => Some(NewtonStats {
            mean_iterations: iter_total as f64 / n_steps.max(1) as f64,
            max_iterations: iter_max,
            fallbacks,
        }),
    };
    Ok((control, trajectory, stats))
}

/// Solves `lambda = base + S * c(lambda)` by Newton iteration starting
/// from the explicit value. Falls back to the explicit value when the
/// Newton denominator degenerates.
fn newton_update(
    base: f64,
    s_node: f64,
    tol: f64,
    coupling: &dyn Fn(f64, bool) -> f64,
) -> (f64, u32, bool) {
    let explicit = base + s_node * coupling(base, false);
    let mut lambda = explicit;
    let mut iters = 0u32;
    loop {
        iters += 1;
        let denom = 1.0 - s_node * coupling(lambda, true);
        if denom.abs() < 1e-12 {
            return (explicit, iters, true);
        }
        let residual = -(lambda - base) + s_node * coupling(lambda, false);
        let delta = residual / denom;
        lambda += delta;
        if delta.abs() < tol {
            return (lambda, iters, false);
        }
        if iters >= 50 {
            return (explicit, iters, true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradient::gradient_l2;
    use crate::grid::{SpatialGrid, TimeGrid};
    use crate::problem::ProblemSpec;
    use crate::stationary::StationaryConfig;
    use std::sync::LazyLock;

    fn small_spec(kappa: f64) -> ProblemSpec {
        let mut spec = ProblemSpec::splitting(kappa);
        spec.grid = SpatialGrid::new(-10.0, 10.0, 128).unwrap();
        spec.time = TimeGrid::new(2.0, 400).unwrap();
        spec.stationary = StationaryConfig {
            stages: vec![(0.05, 3000), (0.01, 6000)],
            residual_target: 1e-5,
            max_polish_steps: 50_000,
        };
        spec
    }

    static PROBLEM: LazyLock<Problem> =
        LazyLock::new(|| small_spec(std::f64::consts::FRAC_PI_2).prepare().unwrap());

    #[test]
    fn zero_shape_reproduces_the_old_iterate_exactly() {
        let problem = &*PROBLEM;
        let mut prop = problem.propagator();
        let mut counter = EquationCounter::new();
        let (_, traj) = problem
            .evaluate_control(&mut prop, &problem.guess, &mut counter)
            .unwrap();
        let psi_t = traj
            .terminal_state(&problem.spec.grid, FieldRole::State)
            .unwrap();
        let p_t = terminal_costate(&psi_t, problem.desired_state()).unwrap();
        let adj = prop
            .propagate_adjoint(&p_t, &traj, &problem.guess, &mut counter)
            .unwrap();

        let params =
            KrotovCostParams::new(1.0, vec![0.0; problem.spec.time.n_nodes()]).unwrap();
        let (control, new_traj, _) = sweep(
            &mut prop,
            problem,
            &problem.guess,
            &adj.costates,
            &params,
            UpdateMode::Explicit,
            1e-6,
            &mut counter,
        )
        .unwrap();
        assert_eq!(control.values(), problem.guess.values());
        for i in [0, 100, 400] {
            assert_eq!(new_traj.node(i), traj.node(i), "node {i}");
        }
    }

    #[test]
    fn shape_zeros_pin_nodes() {
        let problem = &*PROBLEM;
        let config = KrotovConfig::new(1e-3, UpdateMode::Explicit);
        let out = optimize_krotov(problem, &problem.guess, &{
            let mut c = config;
            c.max_equations = 12;
            c.stop_jt = 1e-9;
            c
        })
        .unwrap();
        // sine-ramp shape: endpoints never move
        assert_eq!(out.control.values()[0], problem.guess.values()[0]);
        assert_eq!(
            *out.control.values().last().unwrap(),
            *problem.guess.values().last().unwrap()
        );
        // and the interior does move
        let moved = out
            .control
            .values()
            .iter()
            .zip(problem.guess.values())
            .any(|(a, b)| (a - b).abs() > 1e-9);
        assert!(moved);
    }

    #[test]
    fn monotone_descent_with_newton_updates() {
        let problem = &*PROBLEM;
        let mut config = KrotovConfig::new(1e-3, UpdateMode::Newton);
        config.max_equations = 42; // 20 iterations
        config.stop_jt = 1e-9;
        let out = optimize_krotov(problem, &problem.guess, &config).unwrap();
        let records = &out.trace.records;
        assert!(records.len() >= 20);
        for pair in records.windows(2) {
            assert!(
                pair[1].j_total <= pair[0].j_total + 1e-12,
                "iteration {}: {} -> {}",
                pair[1].iteration,
                pair[0].j_total,
                pair[1].j_total
            );
        }
        // splitting potential is affine in the control: Newton converges
        // in a single iteration everywhere
        for r in &records[1..] {
            let stats = r.newton.expect("newton stats recorded");
            assert_eq!(stats.max_iterations, 1);
            assert_eq!(stats.fallbacks, 0);
        }
    }

    #[test]
    fn small_k_update_follows_the_descent_direction() {
        // the sequential update lags the node-centered gradient by half
        // a step, so this comparison needs the full time resolution
        let mut spec = small_spec(std::f64::consts::FRAC_PI_2);
        spec.time = TimeGrid::new(2.0, 2000).unwrap();
        let problem = &spec.prepare().unwrap();
        let mut prop = problem.propagator();
        let mut counter = EquationCounter::new();
        let (_, traj) = problem
            .evaluate_control(&mut prop, &problem.guess, &mut counter)
            .unwrap();
        let psi_t = traj
            .terminal_state(&problem.spec.grid, FieldRole::State)
            .unwrap();
        let p_t = terminal_costate(&psi_t, problem.desired_state()).unwrap();
        let adj = prop
            .propagate_adjoint(&p_t, &traj, &problem.guess, &mut counter)
            .unwrap();

        let time = &problem.spec.time;
        let shape = make_shape(ShapeKind::SineRamp, 0.1, time).unwrap();
        let k = 1e-6;
        let params = KrotovCostParams::new(k, shape.clone()).unwrap();
        let (control, _, _) = sweep(
            &mut prop,
            problem,
            &problem.guess,
            &adj.costates,
            &params,
            UpdateMode::Explicit,
            1e-6,
            &mut counter,
        )
        .unwrap();

        // compare the realized update against S * (-grad J_T) on the old
        // trajectory (L2, gamma = 0)
        let g = gradient_l2(&problem.guess, &adj, 0.0);
        let n = control.n_nodes();
        let mut update = Vec::new();
        let mut reference = Vec::new();
        for j in 1..n - 1 {
            if shape[j] > 0.0 {
                update.push(control.values()[j] - problem.guess.values()[j]);
                reference.push(-k * shape[j] * g.values()[j]);
            }
        }
        let corr = correlation(&update, &reference);
        assert!(corr > 0.99, "correlation {corr}");
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt()).max(1e-300)
    }

    #[test]
    fn newton_scalar_solver_behaviour() {
        // affine coupling: converges immediately
        let affine = |lambda: f64, second: bool| if second { 0.0 } else { 2.0 - 0.0 * lambda };
        let (lambda, iters, fallback) = newton_update(1.0, 0.1, 1e-10, &affine);
        assert!((lambda - 1.2).abs() < 1e-12);
        assert_eq!(iters, 1);
        assert!(!fallback);

        // genuinely nonlinear coupling: solves the implicit equation
        let nonlinear = |lambda: f64, second: bool| if second { -2.0 * lambda } else { 1.0 - lambda * lambda };
        let (lambda, _, fallback) = newton_update(0.0, 0.5, 1e-12, &nonlinear);
        assert!(!fallback);
        let residual = -(lambda - 0.0) + 0.5 * (1.0 - lambda * lambda);
        assert!(residual.abs() < 1e-10, "residual {residual}");

        // degenerate denominator: falls back to the explicit value
        let degenerate = |_lambda: f64, second: bool| if second { 10.0 } else { 1.0 };
        let (lambda, _, fallback) = newton_update(0.0, 0.1, 1e-10, &degenerate);
        assert!(fallback);
        assert!((lambda - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hybrid_switch_zero_equals_pure_grape() {
        let problem = &*PROBLEM;
        let mut grape_config = GrapeConfig::new(
            crate::grape::SearchMethod::Bfgs,
            crate::gradient::GradientNorm::H1,
        );
        grape_config.max_equations = 30;
        grape_config.stop_jt = 1e-9;
        let krotov_config = {
            let mut c = KrotovConfig::new(1e-3, UpdateMode::Explicit);
            c.max_equations = 30;
            c
        };
        let pure = crate::grape::optimize_grape(problem, &problem.guess, &grape_config).unwrap();
        let hybrid =
            optimize_hybrid(problem, &problem.guess, &krotov_config, &grape_config, 0).unwrap();
        assert_eq!(pure.trace.records.len(), hybrid.trace.records.len());
        for (a, b) in pure.trace.records.iter().zip(&hybrid.trace.records) {
            assert_eq!(a.j_terminal, b.j_terminal);
            assert_eq!(a.n_forward, b.n_forward);
        }
        assert_eq!(pure.control.values(), hybrid.control.values());
    }

    #[test]
    fn hybrid_huge_switch_equals_pure_krotov() {
        let problem = &*PROBLEM;
        let mut krotov_config = KrotovConfig::new(1e-3, UpdateMode::Explicit);
        krotov_config.max_equations = 16;
        krotov_config.stop_jt = 1e-9;
        let grape_config = GrapeConfig::new(
            crate::grape::SearchMethod::Bfgs,
            crate::gradient::GradientNorm::H1,
        );
        let pure = optimize_krotov(problem, &problem.guess, &krotov_config).unwrap();
        let hybrid = optimize_hybrid(
            problem,
            &problem.guess,
            &krotov_config,
            &grape_config,
            usize::MAX,
        )
        .unwrap();
        assert_eq!(pure.trace.records.len(), hybrid.trace.records.len());
        assert_eq!(pure.control.values(), hybrid.control.values());
        assert_eq!(pure.trace.status, hybrid.trace.status);
    }

    #[test]
    fn rejects_reserved_sigma_field() {
        let mut config = KrotovConfig::new(1e-3, UpdateMode::Explicit);
        config.sigma_scale = Some(0.1);
        assert!(config.validate().is_err());
    }
}
