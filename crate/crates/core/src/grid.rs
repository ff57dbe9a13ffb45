//! Spatial and temporal grids.
//!
//! Units are fixed throughout the crate: hbar = 1, time in milliseconds,
//! length in micrometers. Energies and angular frequencies are then in
//! units of 1/ms.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Uniform periodic spatial grid on `[x_min, x_max)`.
///
/// Points are `x_j = x_min + j * dx` for `j = 0..n_points`; the right
/// endpoint is identified with the left one. Wavenumbers follow the
/// standard FFT ordering (non-negative frequencies first), so the
/// largest magnitude satisfies `k_max * dx = pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self, ModelError> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(ModelError::InvalidGrid("non-finite extent".into()));
        }
        if n_points < 8 {
            return Err(ModelError::InvalidGrid(format!(
                "n_points = {n_points}, need at least 8"
            )));
        }
        if x_max <= x_min {
            return Err(ModelError::InvalidGrid(format!(
                "x_max = {x_max} must exceed x_min = {x_min}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Grid spacing `(x_max - x_min) / n_points`.
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    /// Coordinate of grid point `j`.
    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    /// All grid coordinates.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// FFT-ordered angular wavenumbers: `2*pi*m / (n*dx)` with
    /// `m = 0, 1, .., n/2-1, -n/2, .., -1` (for even `n`).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = 2.0 * std::f64::consts::PI / (self.n_points as f64 * self.dx());
        (0..n)
            .map(|m| {
                let m_signed = if 2 * m < n { m } else { m - n };
                m_signed as f64 * dk
            })
            .collect()
    }

    /// Index of the point at `-x(j)` under the periodic identification.
    pub fn mirror_index(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.n_points - j
        }
    }

    /// True when the box is symmetric about the origin, so parity is a
    /// meaningful grid operation.
    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() < 1e-12 * self.dx()
    }
}

/// Uniform time grid on `[0, t_final]` with `n_steps` steps and
/// `n_steps + 1` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self, ModelError> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(ModelError::InvalidGrid(format!(
                "t_final = {t_final} must be positive"
            )));
        }
        if n_steps == 0 {
            return Err(ModelError::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of time nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Time of node `i`.
    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.t(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_points() {
        let g = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
        assert!((g.dx() - 20.0 / 256.0).abs() < 1e-15);
        assert_eq!(g.points().len(), 256);
        assert!((g.x(0) + 10.0).abs() < 1e-15);
        // last point is one spacing short of x_max (periodic box)
        assert!((g.x(255) - (10.0 - g.dx())).abs() < 1e-12);
    }

    #[test]
    fn wavenumber_ordering_and_kmax() {
        let g = SpatialGrid::new(-5.0, 5.0, 16).unwrap();
        let k = g.wavenumbers();
        assert_eq!(k.len(), 16);
        assert_eq!(k[0], 0.0);
        // positive ramp then negative branch
        assert!(k[1] > 0.0 && k[7] > k[1]);
        assert!(k[8] < 0.0);
        assert!((k[15] + k[1]).abs() < 1e-12);
        let k_max = k.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!((k_max * g.dx() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn mirror_index_maps_x_to_minus_x() {
        let g = SpatialGrid::new(-4.0, 4.0, 32).unwrap();
        for j in 1..32 {
            let m = g.mirror_index(j);
            assert!((g.x(m) + g.x(j)).abs() < 1e-12, "j = {j}");
        }
        assert_eq!(g.mirror_index(0), 0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new(-1.0, 1.0, 4).is_err());
        assert!(SpatialGrid::new(1.0, -1.0, 64).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn time_nodes() {
        let t = TimeGrid::new(2.0, 2000).unwrap();
        assert_eq!(t.n_nodes(), 2001);
        assert!((t.dt() - 1e-3).abs() < 1e-18);
        assert!((t.t(2000) - 2.0).abs() < 1e-12);
    }
}
