//! Complex fields on the spatial grid: condensate states, co-states and
//! target states, together with their inner products.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::grid::SpatialGrid;

/// Tolerance on the L2 norm of states that are required to be normalized.
pub const NORM_TOL: f64 = 1e-9;

/// What a complex field on the grid represents. States and desired
/// states must be normalized to one; co-states carry their magnitude as
/// gradient information and are never renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRole {
    State,
    Costate,
    Desired,
}

/// Physical parameters of the mean-field model: atom mass and
/// nonlinearity strength, in units with hbar = 1, time in ms and length
/// in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub mass: f64,
    pub kappa: f64,
}

impl PhysicalParams {
    pub fn new(mass: f64, kappa: f64) -> Result<Self, ModelError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "mass = {mass} must be positive"
            )));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "kappa = {kappa} must be non-negative"
            )));
        }
        Ok(Self { mass, kappa })
    }
}

/// A complex field sampled on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
    role: FieldRole,
}

impl WaveFunction {
    /// Builds a field and validates finiteness; states and desired
    /// states must already be normalized to within [`NORM_TOL`].
    pub fn new(
        grid: SpatialGrid,
        amplitudes: Vec<Complex64>,
        role: FieldRole,
    ) -> Result<Self, ModelError> {
        if amplitudes.len() != grid.n_points() {
            return Err(ModelError::GridMismatch(format!(
                "{} amplitudes on a {}-point grid",
                amplitudes.len(),
                grid.n_points()
            )));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(ModelError::NonFinite("wavefunction amplitudes".into()));
        }
        let wf = Self {
            grid,
            amplitudes,
            role,
        };
        if matches!(role, FieldRole::State | FieldRole::Desired) {
            let norm_sq = wf.norm_squared();
            if (norm_sq - 1.0).abs() > NORM_TOL {
                return Err(ModelError::NotNormalized {
                    norm: norm_sq.sqrt(),
                    tol: NORM_TOL,
                });
            }
        }
        Ok(wf)
    }

    /// Builds a normalized state from arbitrary non-zero amplitudes.
    pub fn normalized(
        grid: SpatialGrid,
        mut amplitudes: Vec<Complex64>,
        role: FieldRole,
    ) -> Result<Self, ModelError> {
        let dx = grid.dx();
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx;
        if !(norm_sq.is_finite() && norm_sq > 0.0) {
            return Err(ModelError::NonFinite("norm of wavefunction".into()));
        }
        let scale = 1.0 / norm_sq.sqrt();
        for a in amplitudes.iter_mut() {
            *a *= scale;
        }
        Self::new(grid, amplitudes, role)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// `sum |psi_j|^2 dx`.
    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Density `|psi_j|^2` at every grid point.
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Position expectation value.
    pub fn mean_x(&self) -> f64 {
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| self.grid.x(j) * a.norm_sqr())
            .sum::<f64>()
            * dx
    }

    /// Second moment `<x^2>`.
    pub fn mean_x_squared(&self) -> f64 {
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let x = self.grid.x(j);
                x * x * a.norm_sqr()
            })
            .sum::<f64>()
            * dx
    }
}

fn check_same_grid(a: &WaveFunction, b: &WaveFunction) -> Result<(), ModelError> {
    if a.grid != b.grid {
        return Err(ModelError::GridMismatch(
            "inner product between fields on different grids".into(),
        ));
    }
    Ok(())
}

/// Discrete L2 inner product `sum conj(a_j) b_j dx`, antilinear in the
/// first argument.
pub fn inner_product(a: &WaveFunction, b: &WaveFunction) -> Result<Complex64, ModelError> {
    check_same_grid(a, b)?;
    Ok(inner_product_raw(
        a.amplitudes(),
        b.amplitudes(),
        a.grid.dx(),
    ))
}

pub(crate) fn inner_product_raw(a: &[Complex64], b: &[Complex64], dx: f64) -> Complex64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        * dx
}

/// Phase-insensitive overlap `|<psi_d|psi>|^2`, the fidelity between two
/// normalized states.
pub fn fidelity_overlap(psi: &WaveFunction, psi_d: &WaveFunction) -> Result<f64, ModelError> {
    let ov = inner_product(psi_d, psi)?;
    Ok(ov.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-8.0, 8.0, 64).unwrap()
    }

    fn gaussian(grid: &SpatialGrid, center: f64, width: f64) -> WaveFunction {
        let amps: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|&x| Complex64::new((-((x - center) / width).powi(2)).exp(), 0.0))
            .collect();
        WaveFunction::normalized(grid.clone(), amps, FieldRole::State).unwrap()
    }

    #[test]
    fn normalized_state_has_unit_overlap() {
        let g = grid();
        let psi = gaussian(&g, 0.0, 1.0);
        let ov = inner_product(&psi, &psi).unwrap();
        assert!((ov.re - 1.0).abs() < 1e-12);
        assert!(ov.im.abs() < 1e-15);
    }

    #[test]
    fn inner_product_is_linear_in_second_argument() {
        let g = grid();
        let psi = gaussian(&g, 0.0, 1.0);
        let i_psi = WaveFunction::new(
            g.clone(),
            psi.amplitudes().iter().map(|a| a * Complex64::I).collect(),
            FieldRole::State,
        )
        .unwrap();
        let ov = inner_product(&psi, &i_psi).unwrap();
        assert!((ov - Complex64::I).norm() < 1e-12);
    }

    #[test]
    fn disjoint_support_is_orthogonal() {
        let g = grid();
        let dx = g.dx();
        let mut a = vec![Complex64::default(); 64];
        let mut b = vec![Complex64::default(); 64];
        a[10] = Complex64::new(1.0 / dx.sqrt(), 0.0);
        b[50] = Complex64::new(1.0 / dx.sqrt(), 0.0);
        let wa = WaveFunction::new(g.clone(), a, FieldRole::State).unwrap();
        let wb = WaveFunction::new(g.clone(), b, FieldRole::State).unwrap();
        assert_eq!(inner_product(&wa, &wb).unwrap(), Complex64::default());
    }

    #[test]
    fn conjugate_symmetry() {
        let g = grid();
        let a = gaussian(&g, -1.0, 1.3);
        let b = gaussian(&g, 0.7, 0.8);
        let ab = inner_product(&a, &b).unwrap();
        let ba = inner_product(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-14);
    }

    #[test]
    fn fidelity_identity_phase_orthogonal() {
        let g = grid();
        let psi = gaussian(&g, 0.0, 1.0);
        assert!((fidelity_overlap(&psi, &psi).unwrap() - 1.0).abs() < 1e-12);

        for phi in [0.3, 1.2, -2.8] {
            let rotated = WaveFunction::new(
                g.clone(),
                psi.amplitudes()
                    .iter()
                    .map(|a| a * Complex64::from_polar(1.0, phi))
                    .collect(),
                FieldRole::State,
            )
            .unwrap();
            assert!((fidelity_overlap(&rotated, &psi).unwrap() - 1.0).abs() < 1e-12);
        }

        // odd versus even function
        let odd = WaveFunction::normalized(
            g.clone(),
            g.points()
                .iter()
                .map(|&x| Complex64::new(x * (-x * x / 2.0).exp(), 0.0))
                .collect(),
            FieldRole::State,
        )
        .unwrap();
        assert!(fidelity_overlap(&odd, &psi).unwrap() < 1e-20);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = gaussian(&grid(), 0.0, 1.0);
        let other = SpatialGrid::new(-8.0, 8.0, 128).unwrap();
        let b = gaussian(&other, 0.0, 1.0);
        assert!(inner_product(&a, &b).is_err());
    }

    #[test]
    fn unnormalized_state_rejected() {
        let g = grid();
        let amps = vec![Complex64::new(1.0, 0.0); 64];
        assert!(WaveFunction::new(g.clone(), amps.clone(), FieldRole::State).is_err());
        // but a costate of arbitrary magnitude is fine
        assert!(WaveFunction::new(g, amps, FieldRole::Costate).is_ok());
    }
}
