//! Problem definitions: potential, physics, grids, boundary states and
//! guess controls, plus the bundled splitting and shaking presets.

use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::dynamics::{EquationCounter, Propagator, PropagatorConfig, Trajectory};
use crate::error::ModelError;
use crate::functional::terminal_cost;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::potential::PotentialFamily;
use crate::stationary::{excited_state, ground_state, StationaryConfig, StationaryState};
use crate::wavefunction::{PhysicalParams, WaveFunction};

/// How a boundary state is obtained from the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StateRule {
    Ground { lambda: f64 },
    Excited { lambda: f64, order: usize },
}

impl StateRule {
    pub fn lambda(&self) -> f64 {
        match self {
            StateRule::Ground { lambda } => *lambda,
            StateRule::Excited { lambda, .. } => *lambda,
        }
    }

    fn solve(
        &self,
        potential: &PotentialFamily,
        phys: PhysicalParams,
        grid: &SpatialGrid,
        config: &StationaryConfig,
    ) -> Result<StationaryState, ModelError> {
        match *self {
            StateRule::Ground { lambda } => ground_state(potential, lambda, phys, grid, config),
            StateRule::Excited { lambda, order } => {
                excited_state(potential, lambda, phys, grid, order, config)
            }
        }
    }
}

/// Guess control shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessKind {
    LinearRamp,
    Constant,
    SineRamp,
}

/// Initial control trajectory: a base ramp between the boundary values
/// plus an optional single-period sine kick that vanishes at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessSpec {
    pub kind: GuessKind,
    pub lambda_start: f64,
    pub lambda_end: f64,
    /// Amplitude of an additive `sin(2 pi t / T)` term; zero for none.
    #[serde(default)]
    pub kick_amplitude: f64,
}

impl GuessSpec {
    pub fn build(&self, time: &TimeGrid) -> Result<ControlField, ModelError> {
        if matches!(self.kind, GuessKind::Constant) && self.lambda_start != self.lambda_end {
            return Err(ModelError::InvalidConfig(
                "constant guess requires equal boundary values".into(),
            ));
        }
        let (a, b) = (self.lambda_start, self.lambda_end);
        let t_final = time.t_final();
        let kick = self.kick_amplitude;
        let base: Box<dyn Fn(f64) -> f64> = match self.kind {
            GuessKind::Constant => Box::new(move |_| a),
            GuessKind::LinearRamp => Box::new(move |t| a + (b - a) * t / t_final),
            GuessKind::SineRamp => Box::new(move |t| {
                let s = (std::f64::consts::FRAC_PI_2 * t / t_final).sin();
                a + (b - a) * s * s
            }),
        };
        ControlField::from_fn(time.clone(), true, |t| {
            base(t) + kick * (2.0 * std::f64::consts::PI * t / t_final).sin()
        })
    }
}

/// A complete, self-contained problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub potential: PotentialFamily,
    pub phys: PhysicalParams,
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub initial: StateRule,
    pub desired: StateRule,
    pub guess: GuessSpec,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub stationary: StationaryConfig,
}

impl ProblemSpec {
    /// Condensate splitting: morph a single well into a double well and
    /// target the double-well ground state. `kappa` is the interaction
    /// strength in 1/ms.
    pub fn splitting(kappa: f64) -> Self {
        Self {
            name: "splitting".into(),
            potential: PotentialFamily::splitting(10.0, 0.8).expect("static coefficients"),
            phys: PhysicalParams { mass: 0.5, kappa },
            grid: SpatialGrid::new(-10.0, 10.0, 256).expect("static grid"),
            time: TimeGrid::new(2.0, 2000).expect("static time grid"),
            initial: StateRule::Ground { lambda: 0.0 },
            desired: StateRule::Ground { lambda: 1.0 },
            guess: GuessSpec {
                kind: GuessKind::LinearRamp,
                lambda_start: 0.0,
                lambda_end: 1.0,
                kick_amplitude: 0.0,
            },
            propagator: PropagatorConfig::default(),
            stationary: StationaryConfig::default(),
        }
    }

    /// Splitting at the default interaction strength (2 pi x 250 Hz).
    pub fn splitting_preset() -> Self {
        Self::splitting(std::f64::consts::FRAC_PI_2)
    }

    /// Splitting at the stronger interaction strength (2 pi x 1000 Hz).
    pub fn splitting_strong_preset() -> Self {
        let mut spec = Self::splitting(2.0 * std::f64::consts::PI);
        spec.name = "splitting-strong".into();
        spec
    }

    /// Condensate shaking: displace an anharmonic single well to drive
    /// the ground state into the first excited state.
    pub fn shaking(kappa: f64) -> Self {
        let mass = 0.5;
        let omega = 2.0 * std::f64::consts::PI * 1.5; // 1.5 kHz trap
        Self {
            name: "shaking".into(),
            potential: PotentialFamily::shaking(mass, omega, -2.0, 0.1)
                .expect("static coefficients"),
            phys: PhysicalParams { mass, kappa },
            grid: SpatialGrid::new(-10.0, 10.0, 256).expect("static grid"),
            time: TimeGrid::new(2.0, 2000).expect("static time grid"),
            initial: StateRule::Ground { lambda: 0.0 },
            desired: StateRule::Excited {
                lambda: 0.0,
                order: 1,
            },
            guess: GuessSpec {
                kind: GuessKind::Constant,
                lambda_start: 0.0,
                lambda_end: 0.0,
                kick_amplitude: 0.1,
            },
            propagator: PropagatorConfig::default(),
            stationary: StationaryConfig::default(),
        }
    }

    pub fn shaking_preset() -> Self {
        Self::shaking(std::f64::consts::FRAC_PI_2)
    }

    /// Looks up a bundled preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "splitting" => Some(Self::splitting_preset()),
            "splitting-strong" => Some(Self::splitting_strong_preset()),
            "shaking" => Some(Self::shaking_preset()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.guess.lambda_start != self.initial.lambda() {
            return Err(ModelError::InvalidConfig(format!(
                "guess starts at {} but the initial state is defined at lambda = {}",
                self.guess.lambda_start,
                self.initial.lambda()
            )));
        }
        if self.guess.lambda_end != self.desired.lambda() {
            return Err(ModelError::InvalidConfig(format!(
                "guess ends at {} but the desired state is defined at lambda = {}",
                self.guess.lambda_end,
                self.desired.lambda()
            )));
        }
        Ok(())
    }

    /// Computes the boundary states and builds the guess control.
    pub fn prepare(&self) -> Result<Problem, ModelError> {
        self.validate()?;
        let initial = self
            .initial
            .solve(&self.potential, self.phys, &self.grid, &self.stationary)?;
        let desired = self
            .desired
            .solve(&self.potential, self.phys, &self.grid, &self.stationary)?;
        let guess = self.guess.build(&self.time)?;
        Ok(Problem {
            spec: self.clone(),
            initial,
            desired,
            guess,
        })
    }
}

/// A prepared problem: boundary states solved, guess control built.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub initial: StationaryState,
    pub desired: StationaryState,
    pub guess: ControlField,
}

impl Problem {
    pub fn propagator(&self) -> Propagator {
        Propagator::new(
            self.spec.grid.clone(),
            self.spec.time.clone(),
            self.spec.potential.clone(),
            self.spec.phys,
            self.spec.propagator,
        )
    }

    pub fn initial_state(&self) -> &WaveFunction {
        &self.initial.state
    }

    pub fn desired_state(&self) -> &WaveFunction {
        &self.desired.state
    }

    /// Propagates one control and returns the terminal cost with the
    /// full trajectory.
    pub fn evaluate_control(
        &self,
        propagator: &mut Propagator,
        control: &ControlField,
        counter: &mut EquationCounter,
    ) -> Result<(f64, Trajectory), ModelError> {
        let traj = propagator.propagate_forward(self.initial_state(), control, counter)?;
        let psi_t = traj.terminal_state(&self.spec.grid, crate::wavefunction::FieldRole::State)?;
        let jt = terminal_cost(&psi_t, self.desired_state())?;
        Ok((jt, traj))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guess_builders() {
        let time = TimeGrid::new(2.0, 100).unwrap();
        let ramp = GuessSpec {
            kind: GuessKind::LinearRamp,
            lambda_start: 0.0,
            lambda_end: 1.0,
            kick_amplitude: 0.0,
        }
        .build(&time)
        .unwrap();
        assert_eq!(ramp.values()[0], 0.0);
        assert!((ramp.values()[100] - 1.0).abs() < 1e-12);
        assert!(ramp.fixed_endpoints());

        let kicked = GuessSpec {
            kind: GuessKind::Constant,
            lambda_start: 0.0,
            lambda_end: 0.0,
            kick_amplitude: 0.1,
        }
        .build(&time)
        .unwrap();
        assert!(kicked.values()[0].abs() < 1e-15);
        assert!(kicked.values()[100].abs() < 1e-12);
        let peak = kicked.values().iter().cloned().fold(f64::MIN, f64::max);
        assert!((peak - 0.1).abs() < 1e-3);
    }

    #[test]
    fn guess_must_match_boundary_lambdas() {
        let mut spec = ProblemSpec::splitting_preset();
        spec.guess.lambda_end = 0.7;
        assert!(matches!(spec.prepare(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn presets_resolve() {
        for name in ["splitting", "splitting-strong", "shaking"] {
            assert!(ProblemSpec::preset(name).is_some(), "{name}");
        }
        assert!(ProblemSpec::preset("unknown").is_none());
    }
}
