//! Control-gradient fields in the L2 and H1 norms.
//!
//! The L2 gradient field combines the co-state coupling accumulated
//! during the backward solve with the second time derivative of the
//! control weighted by the derivative-penalty strength:
//! `grad(t) = -gamma * d2 lambda/dt2 - Re<p|dV/dlambda|psi>`. Endpoint
//! values are zeroed so the boundary values of the control stay pinned.
//! The H1 field additionally solves the Dirichlet problem
//! `-d^2/dt^2 grad_H1 = grad_L2`, which damps high-frequency content
//! and yields much smoother updates.

use serde::{Deserialize, Serialize};

use crate::control::{trapezoid_weights, ControlField};
use crate::dynamics::AdjointSolution;

/// Which inner product the search direction lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientNorm {
    L2,
    H1,
}

/// A gradient sampled on the control's time nodes.
#[derive(Debug, Clone)]
pub struct GradientField {
    values: Vec<f64>,
    norm: GradientNorm,
}

impl GradientField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm_kind(&self) -> GradientNorm {
        self.norm
    }
}

/// Assembles the L2 gradient field from the backward-solve output.
pub fn gradient_l2(lambda: &ControlField, adjoint: &AdjointSolution, gamma: f64) -> GradientField {
    let coupling = adjoint.coupling_at_nodes();
    gradient_l2_from_coupling(lambda, &coupling, gamma)
}

/// Same as [`gradient_l2`] but with the node coupling supplied directly.
pub fn gradient_l2_from_coupling(
    lambda: &ControlField,
    coupling_nodes: &[f64],
    gamma: f64,
) -> GradientField {
    let n = lambda.n_nodes();
    assert_eq!(coupling_nodes.len(), n);
    let d2 = lambda.second_derivative();
    let mut values = vec![0.0; n];
    for j in 1..n - 1 {
        values[j] = -gamma * d2[j] - coupling_nodes[j];
    }
    GradientField {
        values,
        norm: GradientNorm::L2,
    }
}

/// Solves `-d^2/dt^2 g = rhs` with zero Dirichlet boundary values on the
/// time nodes and returns the H1 gradient field.
pub fn gradient_h1(rhs: &GradientField, dt: f64) -> GradientField {
    let values = poisson_dirichlet(rhs.values(), dt);
    GradientField {
        values,
        norm: GradientNorm::H1,
    }
}

/// Tridiagonal Dirichlet solve of `-g'' = rhs` on a uniform grid; the
/// first and last entries of the result are zero.
pub fn poisson_dirichlet(rhs: &[f64], dt: f64) -> Vec<f64> {
    let n = rhs.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let m = n - 2; // interior unknowns
    let dt2 = dt * dt;
    // Thomas algorithm for tridiag(-1, 2, -1)/dt^2
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    let diag = 2.0 / dt2;
    let off = -1.0 / dt2;
    c_prime[0] = off / diag;
    d_prime[0] = rhs[1] / diag;
    for i in 1..m {
        let denom = diag - off * c_prime[i - 1];
        c_prime[i] = off / denom;
        d_prime[i] = (rhs[i + 1] - off * d_prime[i - 1]) / denom;
    }
    out[m] = d_prime[m - 1];
    for i in (0..m - 1).rev() {
        out[i + 1] = d_prime[i] - c_prime[i] * out[i + 2];
    }
    out
}

/// Applies the negated discrete second difference `-(g_{j-1} - 2 g_j +
/// g_{j+1}) / dt^2` at interior nodes, treating the boundary values as
/// given; inverse of [`poisson_dirichlet`] on its range.
pub fn apply_neg_second_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    let dt2 = dt * dt;
    for j in 1..n - 1 {
        out[j] = -(values[j - 1] - 2.0 * values[j] + values[j + 1]) / dt2;
    }
    out
}

/// L2 inner product of two node fields with trapezoidal weights.
pub fn dot_l2(a: &[f64], b: &[f64], dt: f64) -> f64 {
    let w = trapezoid_weights(a.len(), dt);
    a.iter()
        .zip(b.iter())
        .zip(&w)
        .map(|((x, y), wi)| x * y * wi)
        .sum()
}

/// H1 (Dirichlet) inner product `sum (da/dt)(db/dt) dt` via forward
/// differences; the dual pairing satisfied by [`gradient_h1`], so the
/// directional derivative of the cost is norm-independent:
/// `dot_h1(grad_H1, d) == dot_l2(grad_L2, d)` for fields vanishing at
/// the endpoints.
pub fn dot_h1(a: &[f64], b: &[f64], dt: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() - 1 {
        acc += (a[i + 1] - a[i]) * (b[i + 1] - b[i]);
    }
    acc / dt
}

/// Metric dot product for the configured norm.
pub fn dot(norm: GradientNorm, a: &[f64], b: &[f64], dt: f64) -> f64 {
    match norm {
        GradientNorm::L2 => dot_l2(a, b, dt),
        GradientNorm::H1 => dot_h1(a, b, dt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_rhs_gives_zero_field() {
        let rhs = vec![0.0; 101];
        let sol = poisson_dirichlet(&rhs, 0.01);
        assert!(sol.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_is_an_eigenfunction() {
        let n_steps = 2000;
        let t_final = 2.0;
        let dt = t_final / n_steps as f64;
        let rhs: Vec<f64> = (0..=n_steps)
            .map(|i| (PI * i as f64 * dt / t_final).sin())
            .collect();
        let sol = poisson_dirichlet(&rhs, dt);
        let scale = (t_final / PI).powi(2);
        for (i, s) in sol.iter().enumerate() {
            let expect = scale * rhs[i];
            assert!(
                (s - expect).abs() < 1e-5 * scale,
                "node {i}: {s} vs {expect}"
            );
        }
    }

    #[test]
    fn operator_roundtrip() {
        let n = 500;
        let dt = 4e-3;
        let rhs: Vec<f64> = (0..n)
            .map(|i| ((i as f64 * 0.13).sin() + 0.4 * (i as f64 * 0.041).cos()) * ((i > 0 && i < n - 1) as u8 as f64))
            .collect();
        let sol = poisson_dirichlet(&rhs, dt);
        let back = apply_neg_second_difference(&sol, dt);
        let scale = rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for j in 1..n - 1 {
            assert!(
                (back[j] - rhs[j]).abs() < 1e-10 * scale,
                "node {j}: {} vs {}",
                back[j],
                rhs[j]
            );
        }
        assert_eq!(sol[0], 0.0);
        assert_eq!(*sol.last().unwrap(), 0.0);
    }

    #[test]
    fn h1_pairing_matches_l2_pairing() {
        let n = 301;
        let dt = 1e-2;
        let mut rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.21).sin()).collect();
        rhs[0] = 0.0;
        rhs[n - 1] = 0.0;
        let g_l2 = GradientField {
            values: rhs.clone(),
            norm: GradientNorm::L2,
        };
        let g_h1 = gradient_h1(&g_l2, dt);
        let mut dir: Vec<f64> = (0..n).map(|i| (i as f64 * 0.07).cos()).collect();
        dir[0] = 0.0;
        dir[n - 1] = 0.0;
        let a = dot_l2(g_l2.values(), &dir, dt);
        let b = dot_h1(g_h1.values(), &dir, dt);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}
