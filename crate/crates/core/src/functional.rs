//! Cost functionals: terminal infidelity, the derivative penalty used by
//! the concurrent optimizer and the change penalty used by the
//! sequential one, plus shape functions gating the sequential update.

use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::ModelError;
use crate::grid::TimeGrid;
use crate::wavefunction::{fidelity_overlap, WaveFunction};

/// Weight of the derivative penalty `gamma/2 * integral(dlambda/dt)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrapeCostParams {
    pub gamma: f64,
}

impl GrapeCostParams {
    pub fn new(gamma: f64) -> Result<Self, ModelError> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "gamma = {gamma} must be non-negative"
            )));
        }
        Ok(Self { gamma })
    }
}

impl Default for GrapeCostParams {
    fn default() -> Self {
        Self { gamma: 1e-6 }
    }
}

/// Step size and shape function for the change penalty
/// `integral (lambda - lambda_ref)^2 / S(t)` with `S(t) = k s(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrotovCostParams {
    k: f64,
    shape: Vec<f64>,
}

impl KrotovCostParams {
    pub fn new(k: f64, shape: Vec<f64>) -> Result<Self, ModelError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "step size k = {k} must be positive"
            )));
        }
        if shape.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(ModelError::InvalidConfig(
                "shape values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { k, shape })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn shape(&self) -> &[f64] {
        &self.shape
    }

    /// `S(t_i) = k * s(t_i)`.
    pub fn big_s(&self, i: usize) -> f64 {
        self.k * self.shape[i]
    }
}

/// Terminal cost, penalty and their sum for one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub j_terminal: f64,
    pub penalty: f64,
}

impl CostReport {
    pub fn total(&self) -> f64 {
        self.j_terminal + self.penalty
    }
}

/// Terminal infidelity `(1 - |<psi_d|psi_T>|^2) / 2`, zero when the
/// states agree up to a global phase and 1/2 when they are orthogonal.
pub fn terminal_cost(psi_t: &WaveFunction, psi_d: &WaveFunction) -> Result<f64, ModelError> {
    Ok(0.5 * (1.0 - fidelity_overlap(psi_t, psi_d)?))
}

/// Derivative penalty `gamma/2 * sum (dlambda/dt)^2 w_i` with
/// trapezoidal weights and the crate-wide difference stencils.
pub fn grape_penalty(lambda: &ControlField, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let deriv = lambda.time_derivative();
    let w = lambda.quadrature_weights();
    0.5 * gamma
        * deriv
            .iter()
            .zip(&w)
            .map(|(d, wi)| d * d * wi)
            .sum::<f64>()
}

/// Change penalty `sum (lambda - lambda_ref)^2 / S(t_i) * w_i`. Nodes
/// where the shape vanishes contribute nothing as long as the control
/// equals its reference there; otherwise the division is reported as an
/// error.
pub fn krotov_penalty(
    lambda: &ControlField,
    lambda_ref: &ControlField,
    params: &KrotovCostParams,
) -> Result<f64, ModelError> {
    if lambda.n_nodes() != lambda_ref.n_nodes() {
        return Err(ModelError::TimeGridMismatch(
            "control and reference disagree in length".into(),
        ));
    }
    if params.shape.len() != lambda.n_nodes() {
        return Err(ModelError::TimeGridMismatch(
            "shape function disagrees with the control in length".into(),
        ));
    }
    let w = lambda.quadrature_weights();
    let mut total = 0.0;
    for i in 0..lambda.n_nodes() {
        let diff = lambda.values()[i] - lambda_ref.values()[i];
        let s = params.big_s(i);
        if s == 0.0 {
            if diff != 0.0 {
                return Err(ModelError::ShapeDivisionByZero { node: i });
            }
            continue;
        }
        total += diff * diff / s * w[i];
    }
    Ok(total)
}

/// Shape function kinds for the sequential update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Flat,
    SineRamp,
}

/// Samples a shape function on the time nodes. `Flat` is identically
/// one. `SineRamp` rises as sin^2 over `ramp_fraction * T`, holds one in
/// the middle and falls symmetrically; its endpoints are exactly zero.
pub fn make_shape(
    kind: ShapeKind,
    ramp_fraction: f64,
    time: &TimeGrid,
) -> Result<Vec<f64>, ModelError> {
    if !(0.0..=0.5).contains(&ramp_fraction) {
        return Err(ModelError::InvalidConfig(format!(
            "ramp_fraction = {ramp_fraction} must lie in [0, 0.5]"
        )));
    }
    let n = time.n_nodes();
    match kind {
        ShapeKind::Flat => Ok(vec![1.0; n]),
        ShapeKind::SineRamp => {
            let t_total = time.t_final();
            let t_ramp = ramp_fraction * t_total;
            let shape = (0..n)
                .map(|i| {
                    let t = time.t(i);
                    let edge = t.min(t_total - t);
                    if edge <= 0.0 {
                        0.0
                    } else if edge >= t_ramp {
                        1.0
                    } else {
                        let s = (std::f64::consts::FRAC_PI_2 * edge / t_ramp).sin();
                        s * s
                    }
                })
                .collect();
            Ok(shape)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::wavefunction::FieldRole;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-8.0, 8.0, 64).unwrap()
    }

    fn time() -> TimeGrid {
        TimeGrid::new(2.0, 2000).unwrap()
    }

    fn gaussian(center: f64) -> WaveFunction {
        let g = grid();
        let amps = g
            .points()
            .iter()
            .map(|&x| Complex64::new((-(x - center) * (x - center)).exp(), 0.0))
            .collect();
        WaveFunction::normalized(g, amps, FieldRole::State).unwrap()
    }

    #[test]
    fn terminal_cost_examples() {
        let psi = gaussian(0.0);
        assert!(terminal_cost(&psi, &psi).unwrap().abs() < 1e-12);

        let rotated = WaveFunction::new(
            grid(),
            psi.amplitudes()
                .iter()
                .map(|a| a * Complex64::from_polar(1.0, 1.234))
                .collect(),
            FieldRole::State,
        )
        .unwrap();
        assert!(terminal_cost(&rotated, &psi).unwrap().abs() < 1e-12);

        let odd = WaveFunction::normalized(
            grid(),
            grid()
                .points()
                .iter()
                .map(|&x| Complex64::new(x * (-x * x).exp(), 0.0))
                .collect(),
            FieldRole::State,
        )
        .unwrap();
        assert!((terminal_cost(&odd, &psi).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn terminal_cost_arithmetic() {
        // overlap magnitude 0.99 -> cost (1 - 0.9801)/2
        let j = 0.5 * (1.0 - 0.99f64 * 0.99);
        assert!((j - 0.00995).abs() < 1e-12);
    }

    #[test]
    fn derivative_penalty_on_linear_ramp() {
        let lam = ControlField::linear_ramp(time(), 0.0, 2.0, true);
        // dlambda/dt = 1, integral over [0,2] of 1 = 2
        let p = grape_penalty(&lam, 1e-6);
        assert!((p - 1e-6).abs() < 1e-12, "penalty {p}");
        assert_eq!(grape_penalty(&ControlField::constant(time(), 4.0, true), 1e-6), 0.0);
    }

    #[test]
    fn derivative_penalty_on_sine_matches_analytic() {
        // lambda = sin(a t): gamma/2 * integral a^2 cos^2(a t) dt over [0, T]
        let a = 3.0;
        let t_final = 2.0;
        let lam = ControlField::from_fn(time(), false, |t| (a * t).sin()).unwrap();
        let gamma = 0.1;
        let analytic =
            0.5 * gamma * a * a * (t_final / 2.0 + (2.0 * a * t_final).sin() / (4.0 * a));
        let got = grape_penalty(&lam, gamma);
        let dt = time().dt();
        assert!(
            (got - analytic).abs() < 20.0 * dt * dt * analytic.abs().max(1.0),
            "got {got}, analytic {analytic}"
        );
    }

    #[test]
    fn change_penalty_examples() {
        let t = time();
        let shape = make_shape(ShapeKind::Flat, 0.0, &t).unwrap();
        let params = KrotovCostParams::new(0.5, shape).unwrap();
        let lam_ref = ControlField::constant(t.clone(), 1.0, false);
        assert_eq!(krotov_penalty(&lam_ref, &lam_ref, &params).unwrap(), 0.0);

        // constant offset c with s == 1: c^2 T / k
        let lam = ControlField::constant(t.clone(), 1.3, false);
        let expect = 0.3 * 0.3 * t.t_final() / 0.5;
        let got = krotov_penalty(&lam, &lam_ref, &params).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn change_penalty_rejects_zero_shape_division() {
        let t = time();
        let shape = make_shape(ShapeKind::SineRamp, 0.1, &t).unwrap();
        let params = KrotovCostParams::new(1.0, shape).unwrap();
        let lam_ref = ControlField::constant(t.clone(), 0.0, false);
        let mut vals = vec![0.0; t.n_nodes()];
        vals[0] = 0.2; // differs where s = 0
        let lam = ControlField::new(t, vals, false).unwrap();
        assert!(matches!(
            krotov_penalty(&lam, &lam_ref, &params),
            Err(ModelError::ShapeDivisionByZero { node: 0 })
        ));
    }

    #[test]
    fn shapes() {
        let t = time();
        let flat = make_shape(ShapeKind::Flat, 0.0, &t).unwrap();
        assert!(flat.iter().all(|&s| s == 1.0));

        let ramp = make_shape(ShapeKind::SineRamp, 0.1, &t).unwrap();
        assert_eq!(ramp[0], 0.0);
        assert_eq!(*ramp.last().unwrap(), 0.0);
        // at t = t_ramp the shape reaches one
        let i_ramp = (0.1 * t.n_steps() as f64).round() as usize;
        assert!((ramp[i_ramp] - 1.0).abs() < 1e-12);
        let mid = t.n_nodes() / 2;
        assert_eq!(ramp[mid], 1.0);
        assert!(ramp.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    proptest! {
        #[test]
        fn penalty_scalings(gamma in 1e-8f64..1.0, k in 1e-4f64..10.0, c in 0.1f64..3.0) {
            let t = TimeGrid::new(1.0, 64).unwrap();
            let lam = ControlField::from_fn(t.clone(), false, |x| (5.0 * x).sin()).unwrap();
            // linear scaling in gamma
            let p1 = grape_penalty(&lam, gamma);
            let p2 = grape_penalty(&lam, 2.0 * gamma);
            prop_assert!((p2 - 2.0 * p1).abs() <= 1e-12 * p2.abs());

            // exact 1/k scaling of the change penalty
            let shape = make_shape(ShapeKind::Flat, 0.0, &t).unwrap();
            let lam_ref = ControlField::constant(t.clone(), 0.0, false);
            let offset = ControlField::constant(t.clone(), c, false);
            let pk = krotov_penalty(&offset, &lam_ref, &KrotovCostParams::new(k, shape.clone()).unwrap()).unwrap();
            let p2k = krotov_penalty(&offset, &lam_ref, &KrotovCostParams::new(2.0 * k, shape).unwrap()).unwrap();
            prop_assert!((pk - 2.0 * p2k).abs() <= 1e-12 * pk.abs());
        }

        #[test]
        fn terminal_cost_bounded(seed in proptest::collection::vec(-1.0f64..1.0, 128)) {
            let g = SpatialGrid::new(-4.0, 4.0, 64).unwrap();
            let amps_a: Vec<Complex64> = seed.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            let amps_b: Vec<Complex64> = seed.chunks(2).rev().map(|c| Complex64::new(c[1], c[0] + 0.1)).collect();
            let a = WaveFunction::normalized(g.clone(), amps_a, FieldRole::State);
            let b = WaveFunction::normalized(g, amps_b, FieldRole::Desired);
            if let (Ok(a), Ok(b)) = (a, b) {
                let j = terminal_cost(&a, &b).unwrap();
                prop_assert!((-1e-12..=0.5 + 1e-12).contains(&j), "j = {j}");
            }
        }
    }
}
