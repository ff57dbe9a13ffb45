//! Real control time series lambda(t) sampled at time nodes.
//!
//! The discrete derivative convention is fixed crate-wide: central
//! differences at interior nodes, one-sided at the two endpoints. The
//! propagators consume mid-step values, defined as the average of the
//! two adjacent nodes.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::grid::TimeGrid;

/// A control parameter trajectory with one value per time node
/// (`n_steps + 1` values, endpoints included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    time: TimeGrid,
    values: Vec<f64>,
    fixed_endpoints: bool,
}

impl ControlField {
    pub fn new(time: TimeGrid, values: Vec<f64>, fixed_endpoints: bool) -> Result<Self, ModelError> {
        if values.len() != time.n_nodes() {
            return Err(ModelError::TimeGridMismatch(format!(
                "{} control values for {} time nodes",
                values.len(),
                time.n_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("control values".into()));
        }
        Ok(Self {
            time,
            values,
            fixed_endpoints,
        })
    }

    /// Constant control.
    pub fn constant(time: TimeGrid, value: f64, fixed_endpoints: bool) -> Self {
        let n = time.n_nodes();
        Self {
            time,
            values: vec![value; n],
            fixed_endpoints,
        }
    }

    /// Linear ramp from `start` at t = 0 to `end` at t = T.
    pub fn linear_ramp(time: TimeGrid, start: f64, end: f64, fixed_endpoints: bool) -> Self {
        let n = time.n_nodes();
        let values = (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect();
        Self {
            time,
            values,
            fixed_endpoints,
        }
    }

    /// Evaluates an arbitrary function of time at every node.
    pub fn from_fn(
        time: TimeGrid,
        fixed_endpoints: bool,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ModelError> {
        let values = time.nodes().iter().map(|&t| f(t)).collect();
        Self::new(time, values, fixed_endpoints)
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fixed_endpoints(&self) -> bool {
        self.fixed_endpoints
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    /// Value at the midpoint of step `i`, the average of nodes `i` and
    /// `i + 1`.
    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.values[i] + self.values[i + 1])
    }

    /// Replaces all node values, preserving the endpoints when they are
    /// fixed. Non-finite updates are rejected.
    pub fn set_values(&mut self, new_values: &[f64]) -> Result<(), ModelError> {
        assert_eq!(new_values.len(), self.values.len());
        if new_values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("control update".into()));
        }
        let (first, last) = (self.values[0], *self.values.last().unwrap());
        self.values.copy_from_slice(new_values);
        if self.fixed_endpoints {
            self.values[0] = first;
            *self.values.last_mut().unwrap() = last;
        }
        Ok(())
    }

    /// First time derivative: central differences at interior nodes,
    /// one-sided at the endpoints.
    pub fn time_derivative(&self) -> Vec<f64> {
        let v = &self.values;
        let n = v.len();
        let dt = self.time.dt();
        let mut d = vec![0.0; n];
        d[0] = (v[1] - v[0]) / dt;
        d[n - 1] = (v[n - 1] - v[n - 2]) / dt;
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
        }
        d
    }

    /// Second time derivative at interior nodes (three-point stencil);
    /// endpoint entries are zero.
    pub fn second_derivative(&self) -> Vec<f64> {
        let v = &self.values;
        let n = v.len();
        let dt2 = self.time.dt() * self.time.dt();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / dt2;
        }
        d
    }

    /// Trapezoidal quadrature weights over the time nodes; they sum to
    /// the terminal time exactly.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.time.n_nodes(), self.time.dt())
    }
}

/// Trapezoidal weights for `n` nodes with spacing `dt`.
pub fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n];
    w[0] = 0.5 * dt;
    w[n - 1] = 0.5 * dt;
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn time() -> TimeGrid {
        TimeGrid::new(2.0, 200).unwrap()
    }

    #[test]
    fn derivative_exact_on_linear() {
        let c = ControlField::linear_ramp(time(), 0.0, 1.0, true);
        for d in c.time_derivative() {
            assert!((d - 0.5).abs() < 1e-12);
        }
        for (i, d) in c.second_derivative().iter().enumerate() {
            assert!(d.abs() < 1e-9, "node {i}: {d}");
        }
    }

    #[test]
    fn second_derivative_exact_on_quadratic() {
        let c = ControlField::from_fn(time(), false, |t| 3.0 * t * t).unwrap();
        let dd = c.second_derivative();
        for d in &dd[1..dd.len() - 1] {
            assert!((d - 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn weights_sum_to_t_final() {
        let c = ControlField::constant(time(), 1.0, false);
        let total: f64 = c.quadrature_weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_endpoints_survive_updates() {
        let mut c = ControlField::linear_ramp(time(), 0.0, 1.0, true);
        let proposal = vec![5.0; c.n_nodes()];
        c.set_values(&proposal).unwrap();
        assert_eq!(c.values()[0], 0.0);
        assert_eq!(*c.values().last().unwrap(), 1.0);
        assert_eq!(c.values()[1], 5.0);
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        let t = time();
        assert!(ControlField::new(t.clone(), vec![0.0; 5], false).is_err());
        let mut vals = vec![0.0; t.n_nodes()];
        vals[3] = f64::NAN;
        assert!(ControlField::new(t, vals, false).is_err());
    }
}
