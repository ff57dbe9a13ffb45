//! Time propagation: forward mean-field dynamics and the backward
//! co-state equation, with per-solve equation counting.
//!
//! The forward equation
//! `i d psi/dt = (-(1/2M) d^2/dx^2 + V(x, lambda(t)) + kappa |psi|^2) psi`
//! is integrated with Strang splitting: a half step of the kinetic
//! factor in Fourier space, a full pointwise step of potential plus
//! nonlinearity (exact, since the density is invariant under a pure
//! phase), and another half kinetic step. The control enters each step
//! through its mid-step value, the average of the two adjacent nodes.
//!
//! The co-state equation
//! `i dp/dt = (-(1/2M) d^2/dx^2 + V + 2 kappa |psi|^2) p + kappa psi^2 conj(p)`
//! is integrated backwards with the same splitting. Its pointwise stage
//! applies the exact conjugate of the linearized forward phase map, so
//! the backward sweep is the discrete adjoint of the forward scheme and
//! the control gradient assembled from it matches finite differences of
//! the discrete cost to roundoff. The co-state norm carries gradient
//! information and is never renormalized.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::ModelError;
use crate::fft::FftWorkspace;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::potential::PotentialFamily;
use crate::wavefunction::{inner_product, FieldRole, PhysicalParams, WaveFunction};

/// Available integration schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PropagationScheme {
    #[default]
    SplitStepSecondOrder,
}

/// Propagator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    pub scheme: PropagationScheme,
    /// Allowed norm drift per millisecond of forward propagation.
    pub norm_check_tol: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            scheme: PropagationScheme::SplitStepSecondOrder,
            norm_check_tol: 1e-9,
        }
    }
}

/// Counts full [0, T] solves of either the forward or the backward
/// equation; the effort metric every optimizer reports against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EquationCounter {
    n_forward: u64,
    n_backward: u64,
}

impl EquationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_forward(&mut self) {
        self.n_forward += 1;
    }

    pub fn record_backward(&mut self) {
        self.n_backward += 1;
    }

    pub fn n_forward(&self) -> u64 {
        self.n_forward
    }

    pub fn n_backward(&self) -> u64 {
        self.n_backward
    }

    pub fn n_total(&self) -> u64 {
        self.n_forward + self.n_backward
    }
}

/// States stored at every time node of one propagation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    n_points: usize,
    n_nodes: usize,
    data: Vec<Complex64>,
}

impl Trajectory {
    fn with_capacity(n_points: usize, n_nodes: usize) -> Self {
        Self {
            n_points,
            n_nodes,
            data: Vec::with_capacity(n_points * n_nodes),
        }
    }

    pub(crate) fn from_parts(n_points: usize, n_nodes: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), n_points * n_nodes);
        Self {
            n_points,
            n_nodes,
            data,
        }
    }

    fn push_node(&mut self, state: &[Complex64]) {
        debug_assert_eq!(state.len(), self.n_points);
        self.data.extend_from_slice(state);
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// State at time node `i`.
    pub fn node(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn terminal(&self) -> &[Complex64] {
        self.node(self.n_nodes - 1)
    }

    pub fn terminal_state(&self, grid: &SpatialGrid, role: FieldRole) -> Result<WaveFunction, ModelError> {
        WaveFunction::new(grid.clone(), self.terminal().to_vec(), role)
    }

    /// Density `|psi(x, t)|^2` at every stored node, row per node.
    pub fn density_map(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes)
            .map(|i| self.node(i).iter().map(|a| a.norm_sqr()).collect())
            .collect()
    }
}

/// Backward solve output: the co-state trajectory and the accumulated
/// control-gradient integrand.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub costates: Trajectory,
    /// `Re <p | dV/dlambda | psi>` evaluated at each step midpoint
    /// during the backward sweep (one entry per time step). Together
    /// with trapezoidal node weights this is the exact derivative of the
    /// discrete terminal cost with respect to the control nodes.
    pub coupling_mid: Vec<f64>,
}

impl AdjointSolution {
    /// Coupling resampled at the time nodes by averaging the two
    /// adjacent midpoints (one-sided at the ends).
    pub fn coupling_at_nodes(&self) -> Vec<f64> {
        let u = &self.coupling_mid;
        let n_steps = u.len();
        let mut v = vec![0.0; n_steps + 1];
        v[0] = u[0];
        v[n_steps] = u[n_steps - 1];
        for j in 1..n_steps {
            v[j] = 0.5 * (u[j - 1] + u[j]);
        }
        v
    }
}

/// Terminal condition for the backward solve:
/// `p(T) = i <psi_d|psi(T)> psi_d`.
pub fn terminal_costate(
    psi_t: &WaveFunction,
    psi_d: &WaveFunction,
) -> Result<WaveFunction, ModelError> {
    let overlap = inner_product(psi_d, psi_t)?;
    let amps = psi_d
        .amplitudes()
        .iter()
        .map(|a| Complex64::I * overlap * a)
        .collect();
    WaveFunction::new(psi_d.grid().clone(), amps, FieldRole::Costate)
}

/// Split-step propagator bound to one problem geometry. Holds the FFT
/// workspace and cached kinetic phases; one instance per run, never
/// shared between threads.
pub struct Propagator {
    grid: SpatialGrid,
    time: TimeGrid,
    potential: PotentialFamily,
    phys: PhysicalParams,
    config: PropagatorConfig,
    fft: FftWorkspace,
    /// `k^2 / (2M) * dt / 2` for every FFT-ordered wavenumber.
    kinetic_half_phase: Vec<f64>,
    x: Vec<f64>,
}

impl Propagator {
    pub fn new(
        grid: SpatialGrid,
        time: TimeGrid,
        potential: PotentialFamily,
        phys: PhysicalParams,
        config: PropagatorConfig,
    ) -> Self {
        let dt = time.dt();
        let kinetic_half_phase = grid
            .wavenumbers()
            .iter()
            .map(|k| k * k / (2.0 * phys.mass) * dt / 2.0)
            .collect();
        let fft = FftWorkspace::new(grid.n_points());
        let x = grid.points();
        Self {
            grid,
            time,
            potential,
            phys,
            config,
            fft,
            kinetic_half_phase,
            x,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn potential(&self) -> &PotentialFamily {
        &self.potential
    }

    pub fn phys(&self) -> PhysicalParams {
        self.phys
    }

    /// Applies `exp(-i sign * k^2/(2M) * dt/2)` in Fourier space.
    fn half_kinetic(&mut self, state: &mut [Complex64], sign: f64) {
        self.fft.forward(state);
        for (a, phase) in state.iter_mut().zip(&self.kinetic_half_phase) {
            *a *= Complex64::from_polar(1.0, -sign * phase);
        }
        self.fft.inverse(state);
    }

    /// Half kinetic step exposed to the sequential-update sweep, which
    /// interleaves control updates with the propagation stages.
    pub(crate) fn apply_half_kinetic(&mut self, state: &mut [Complex64]) {
        self.half_kinetic(state, 1.0);
    }

    /// Pointwise potential-plus-nonlinearity step over one full dt.
    pub(crate) fn apply_phase_step(&mut self, state: &mut [Complex64], lambda: f64) {
        let dt = self.time.dt();
        let kappa = self.phys.kappa;
        for (j, a) in state.iter_mut().enumerate() {
            let v = self.potential.value_at(self.x[j], lambda);
            let theta = (v + kappa * a.norm_sqr()) * dt;
            *a *= Complex64::from_polar(1.0, -theta);
        }
    }

    fn check_control(&self, control: &ControlField) -> Result<(), ModelError> {
        if control.n_nodes() != self.time.n_nodes() {
            return Err(ModelError::TimeGridMismatch(format!(
                "control has {} nodes, propagator expects {}",
                control.n_nodes(),
                self.time.n_nodes()
            )));
        }
        Ok(())
    }

    /// Solves the forward equation from `psi0` over the whole time grid
    /// and records one forward solve on the counter. The returned
    /// trajectory stores the state at every node.
    pub fn propagate_forward(
        &mut self,
        psi0: &WaveFunction,
        control: &ControlField,
        counter: &mut EquationCounter,
    ) -> Result<Trajectory, ModelError> {
        self.check_control(control)?;
        if psi0.grid() != &self.grid {
            return Err(ModelError::GridMismatch(
                "initial state lives on a different grid".into(),
            ));
        }
        let n_steps = self.time.n_steps();
        let dt = self.time.dt();
        let dx = self.grid.dx();
        let kappa = self.phys.kappa;

        let mut state = psi0.amplitudes().to_vec();
        let mut traj = Trajectory::with_capacity(self.grid.n_points(), self.time.n_nodes());
        traj.push_node(&state);

        for i in 0..n_steps {
            let lambda_mid = control.midpoint(i);
            self.potential.check_lambda(lambda_mid)?;

            self.half_kinetic(&mut state, 1.0);
            for (j, a) in state.iter_mut().enumerate() {
                let v = self.potential.value_at(self.x[j], lambda_mid);
                let theta = (v + kappa * a.norm_sqr()) * dt;
                *a *= Complex64::from_polar(1.0, -theta);
            }
            self.half_kinetic(&mut state, 1.0);

            let t = self.time.t(i + 1);
            let norm_sq: f64 = state.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx;
            if !norm_sq.is_finite() {
                return Err(ModelError::NonFinite(format!("state at t = {t} ms")));
            }
            let drift = (norm_sq.sqrt() - 1.0).abs();
            if drift > self.config.norm_check_tol * t.max(dt) {
                return Err(ModelError::NormDrift {
                    drift,
                    t,
                    tol: self.config.norm_check_tol,
                });
            }
            traj.push_node(&state);
        }
        counter.record_forward();
        Ok(traj)
    }

    /// Integrates the forward equation backwards in time (negated time
    /// step, steps visited in reverse). With the same control this is
    /// the exact inverse of [`propagate_forward`] up to roundoff.
    pub fn propagate_reverse(
        &mut self,
        psi_t: &WaveFunction,
        control: &ControlField,
        counter: &mut EquationCounter,
    ) -> Result<Trajectory, ModelError> {
        self.check_control(control)?;
        let n_steps = self.time.n_steps();
        let dt = self.time.dt();
        let kappa = self.phys.kappa;

        let mut state = psi_t.amplitudes().to_vec();
        let mut nodes_reversed = Trajectory::with_capacity(self.grid.n_points(), self.time.n_nodes());
        nodes_reversed.push_node(&state);

        for i in (0..n_steps).rev() {
            let lambda_mid = control.midpoint(i);
            self.potential.check_lambda(lambda_mid)?;
            self.half_kinetic(&mut state, -1.0);
            for (j, a) in state.iter_mut().enumerate() {
                let v = self.potential.value_at(self.x[j], lambda_mid);
                let theta = (v + kappa * a.norm_sqr()) * dt;
                *a *= Complex64::from_polar(1.0, theta);
            }
            self.half_kinetic(&mut state, -1.0);
            nodes_reversed.push_node(&state);
        }
        counter.record_forward();
        Ok(nodes_reversed)
    }

    /// Solves the co-state equation backwards from `p(T) = p_terminal`
    /// along a stored forward trajectory, records one backward solve and
    /// accumulates the control-gradient integrand at every step
    /// midpoint. The returned co-state trajectory is indexed like the
    /// forward one (node 0 is t = 0).
    pub fn propagate_adjoint(
        &mut self,
        p_terminal: &WaveFunction,
        forward: &Trajectory,
        control: &ControlField,
        counter: &mut EquationCounter,
    ) -> Result<AdjointSolution, ModelError> {
        self.check_control(control)?;
        if forward.n_nodes() != self.time.n_nodes() || forward.n_points() != self.grid.n_points() {
            return Err(ModelError::TimeGridMismatch(
                "forward trajectory does not match the propagator geometry".into(),
            ));
        }
        let n_steps = self.time.n_steps();
        let n_points = self.grid.n_points();
        let dt = self.time.dt();
        let dx = self.grid.dx();
        let kappa = self.phys.kappa;

        let mut p = p_terminal.amplitudes().to_vec();
        let mut coupling_mid = vec![0.0; n_steps];
        // co-states collected terminal-first, then reversed into node order
        let mut rev = Trajectory::with_capacity(n_points, self.time.n_nodes());
        rev.push_node(&p);

        let mut phi_mid = vec![Complex64::default(); n_points];
        for i in (0..n_steps).rev() {
            let lambda_mid = control.midpoint(i);

            // mid-stage forward field of step i: half kinetic applied to node i
            phi_mid.copy_from_slice(forward.node(i));
            self.half_kinetic(&mut phi_mid, 1.0);

            // pull p through the trailing half-kinetic of the forward step
            self.half_kinetic(&mut p, -1.0);

            // gradient integrand, paired with the post-phase field
            let mut coupling = 0.0;
            for (j, (pj, phi)) in p.iter().zip(phi_mid.iter()).enumerate() {
                let v = self.potential.value_at(self.x[j], lambda_mid);
                let theta = (v + kappa * phi.norm_sqr()) * dt;
                let phi_post = phi * Complex64::from_polar(1.0, -theta);
                let w = self.potential.d_lambda_at(self.x[j], lambda_mid);
                coupling += w * (pj.conj() * phi_post).re;
            }
            coupling_mid[i] = coupling * dx;

            // conjugate of the linearized phase map
            for (j, pj) in p.iter_mut().enumerate() {
                let phi = phi_mid[j];
                let n_loc = phi.norm_sqr();
                let v = self.potential.value_at(self.x[j], lambda_mid);
                let theta = (v + kappa * n_loc) * dt;
                let rot = Complex64::from_polar(1.0, theta);
                let diag = rot * Complex64::new(1.0, dt * kappa * n_loc);
                let cross = Complex64::new(0.0, dt * kappa) * phi * phi * rot.conj();
                *pj = diag * *pj + cross * pj.conj();
            }

            self.half_kinetic(&mut p, -1.0);
            rev.push_node(&p);
        }

        let mut costates = Trajectory::with_capacity(n_points, self.time.n_nodes());
        for i in (0..rev.n_nodes()).rev() {
            costates.push_node(rev.node(i));
        }
        counter.record_backward();
        Ok(AdjointSolution {
            costates,
            coupling_mid,
        })
    }
}
