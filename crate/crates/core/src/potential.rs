//! Parameterized confinement potentials V(x, lambda) with analytic
//! derivatives in the control parameter.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::grid::SpatialGrid;

/// A family of confinement potentials controlled by a single real
/// parameter.
///
/// * `SplittingPoly` morphs a single well into a double well:
///   `V(x, l) = beta x^4 + alpha (1 - 2 l) x^2`. At `l = 0` the trap is
///   a single well with minimum at the origin; at `l = 1` a barrier
///   forms and the minima sit at `x = +-sqrt(alpha / (2 beta))`. The
///   control is dimensionless.
/// * `ShakingShifted` rigidly displaces an anharmonic single well:
///   `V(x, l) = V0(x - l)` with
///   `V0(u) = mass omega^2 u^2 / 2 + quartic u^4 + sextic u^6`. The
///   control is the well position in micrometers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialFamily {
    SplittingPoly {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        lambda_bounds: Option<(f64, f64)>,
    },
    ShakingShifted {
        mass: f64,
        omega: f64,
        quartic: f64,
        sextic: f64,
        #[serde(default)]
        lambda_bounds: Option<(f64, f64)>,
    },
}

impl PotentialFamily {
    pub fn splitting(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "splitting potential needs alpha, beta > 0 (got {alpha}, {beta})"
            )));
        }
        Ok(Self::SplittingPoly {
            alpha,
            beta,
            lambda_bounds: None,
        })
    }

    pub fn shaking(mass: f64, omega: f64, quartic: f64, sextic: f64) -> Result<Self, ModelError> {
        if !(mass.is_finite() && mass > 0.0 && omega.is_finite() && omega >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "shaking potential needs mass > 0 and omega >= 0 (got {mass}, {omega})"
            )));
        }
        if !(quartic.is_finite() && sextic.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "shaking potential coefficients must be finite".into(),
            ));
        }
        Ok(Self::ShakingShifted {
            mass,
            omega,
            quartic,
            sextic,
            lambda_bounds: None,
        })
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        let bounds = Some((lo, hi));
        match &mut self {
            Self::SplittingPoly { lambda_bounds, .. } => *lambda_bounds = bounds,
            Self::ShakingShifted { lambda_bounds, .. } => *lambda_bounds = bounds,
        }
        self
    }

    pub fn lambda_bounds(&self) -> Option<(f64, f64)> {
        match self {
            Self::SplittingPoly { lambda_bounds, .. } => *lambda_bounds,
            Self::ShakingShifted { lambda_bounds, .. } => *lambda_bounds,
        }
    }

    /// Unit of the control parameter, for reporting.
    pub fn lambda_unit(&self) -> &'static str {
        match self {
            Self::SplittingPoly { .. } => "dimensionless",
            Self::ShakingShifted { .. } => "um",
        }
    }

    pub fn check_lambda(&self, lambda: f64) -> Result<(), ModelError> {
        if !lambda.is_finite() {
            return Err(ModelError::NonFinite("control parameter".into()));
        }
        if let Some((lo, hi)) = self.lambda_bounds() {
            if lambda < lo || lambda > hi {
                return Err(ModelError::LambdaOutOfBounds { lambda, lo, hi });
            }
        }
        Ok(())
    }

    /// Potential value at a single point.
    pub fn value_at(&self, x: f64, lambda: f64) -> f64 {
        match *self {
            Self::SplittingPoly { alpha, beta, .. } => {
                let x2 = x * x;
                beta * x2 * x2 + alpha * (1.0 - 2.0 * lambda) * x2
            }
            Self::ShakingShifted {
                mass,
                omega,
                quartic,
                sextic,
                ..
            } => {
                let u = x - lambda;
                let u2 = u * u;
                0.5 * mass * omega * omega * u2 + quartic * u2 * u2 + sextic * u2 * u2 * u2
            }
        }
    }

    /// d V / d lambda at a single point.
    pub fn d_lambda_at(&self, x: f64, lambda: f64) -> f64 {
        match *self {
            Self::SplittingPoly { alpha, .. } => -2.0 * alpha * x * x,
            Self::ShakingShifted {
                mass,
                omega,
                quartic,
                sextic,
                ..
            } => {
                // -V0'(x - lambda)
                let u = x - lambda;
                let u2 = u * u;
                -(mass * omega * omega * u + 4.0 * quartic * u2 * u + 6.0 * sextic * u2 * u2 * u)
            }
        }
    }

    /// d^2 V / d lambda^2 at a single point.
    pub fn d2_lambda_at(&self, x: f64, lambda: f64) -> f64 {
        match *self {
            Self::SplittingPoly { .. } => 0.0,
            Self::ShakingShifted {
                mass,
                omega,
                quartic,
                sextic,
                ..
            } => {
                // V0''(x - lambda)
                let u = x - lambda;
                let u2 = u * u;
                mass * omega * omega + 12.0 * quartic * u2 + 30.0 * sextic * u2 * u2
            }
        }
    }

    /// Potential sampled on a grid.
    pub fn evaluate(&self, grid: &SpatialGrid, lambda: f64) -> Result<Vec<f64>, ModelError> {
        self.check_lambda(lambda)?;
        Ok(grid
            .points()
            .iter()
            .map(|&x| self.value_at(x, lambda))
            .collect())
    }

    /// dV/d lambda sampled on a grid.
    pub fn d_dlambda(&self, grid: &SpatialGrid, lambda: f64) -> Result<Vec<f64>, ModelError> {
        self.check_lambda(lambda)?;
        Ok(grid
            .points()
            .iter()
            .map(|&x| self.d_lambda_at(x, lambda))
            .collect())
    }

    /// d^2 V / d lambda^2 sampled on a grid.
    pub fn d2_dlambda2(&self, grid: &SpatialGrid, lambda: f64) -> Result<Vec<f64>, ModelError> {
        self.check_lambda(lambda)?;
        Ok(grid
            .points()
            .iter()
            .map(|&x| self.d2_lambda_at(x, lambda))
            .collect())
    }

    /// True when V(x, lambda) = V(-x, lambda), which holds for the
    /// splitting family at any control value and for the shaking family
    /// at lambda = 0.
    pub fn is_symmetric_at(&self, lambda: f64) -> bool {
        match self {
            Self::SplittingPoly { .. } => true,
            Self::ShakingShifted { .. } => lambda == 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-10.0, 10.0, 64).unwrap()
    }

    #[test]
    fn splitting_single_well_at_zero() {
        let f = PotentialFamily::splitting(1.0, 0.08).unwrap();
        assert_eq!(f.value_at(0.0, 0.0), 0.0);
        // V''(0) = 2 alpha > 0: a minimum at the origin
        let h = 1e-4;
        let curv = (f.value_at(h, 0.0) - 2.0 * f.value_at(0.0, 0.0) + f.value_at(-h, 0.0)) / (h * h);
        assert!((curv - 2.0).abs() < 1e-4);
    }

    #[test]
    fn splitting_barrier_at_one() {
        let (alpha, beta) = (1.0, 0.08);
        let f = PotentialFamily::splitting(alpha, beta).unwrap();
        let h = 1e-4;
        let d1 = (f.value_at(h, 1.0) - f.value_at(-h, 1.0)) / (2.0 * h);
        let d2 = (f.value_at(h, 1.0) - 2.0 * f.value_at(0.0, 1.0) + f.value_at(-h, 1.0)) / (h * h);
        assert!(d1.abs() < 1e-8);
        assert!((d2 + 2.0 * alpha).abs() < 1e-4, "barrier curvature {d2}");
        // minima at +-sqrt(alpha / (2 beta))
        let xm = (alpha / (2.0 * beta)).sqrt();
        let dv = 1e-5;
        let slope = (f.value_at(xm + dv, 1.0) - f.value_at(xm - dv, 1.0)) / (2.0 * dv);
        assert!(slope.abs() < 1e-6);
    }

    #[test]
    fn splitting_lambda_derivatives() {
        let f = PotentialFamily::splitting(1.0, 0.08).unwrap();
        assert_eq!(f.d_lambda_at(2.0, 0.3), -8.0);
        assert_eq!(f.d2_lambda_at(2.0, 0.3), 0.0);
    }

    #[test]
    fn shaking_shift_identity_and_argmin() {
        let f = PotentialFamily::shaking(0.5, 2.0, 0.01, 0.001).unwrap();
        let g = grid();
        let lam = 0.5;
        // V(x, lambda) equals V0 evaluated at the shifted argument
        for &x in g.points().iter() {
            let direct = f.value_at(x, lam);
            let shifted = f.value_at(x - lam, 0.0);
            assert!((direct - shifted).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
        // argmin sits at the control value
        let (mut best_x, mut best_v) = (0.0, f64::INFINITY);
        let mut x = -2.0;
        while x < 3.0 {
            let v = f.value_at(x, lam);
            if v < best_v {
                best_v = v;
                best_x = x;
            }
            x += 1e-3;
        }
        assert!((best_x - lam).abs() < 2e-3, "argmin at {best_x}");
    }

    #[test]
    fn shaking_harmonic_only_derivative() {
        let f = PotentialFamily::shaking(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((f.d_lambda_at(1.0, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn finite_difference_cross_check_tight() {
        let f = PotentialFamily::shaking(0.5, 9.42, -2.0, 0.1).unwrap();
        let h = 1e-5;
        for &(x, lam) in &[(0.7, 0.2), (-1.3, -0.4), (2.1, 0.05)] {
            let fd = (f.value_at(x, lam + h) - f.value_at(x, lam - h)) / (2.0 * h);
            let an = f.d_lambda_at(x, lam);
            assert!(
                (fd - an).abs() <= 1e-8 * an.abs().max(1e-3),
                "x={x} lam={lam}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn bounds_are_enforced() {
        let f = PotentialFamily::splitting(1.0, 0.08)
            .unwrap()
            .with_bounds(0.0, 1.0);
        assert!(f.evaluate(&grid(), 0.5).is_ok());
        assert!(matches!(
            f.evaluate(&grid(), 1.5),
            Err(ModelError::LambdaOutOfBounds { .. })
        ));
    }

    fn families() -> Vec<PotentialFamily> {
        vec![
            PotentialFamily::splitting(10.0, 0.8).unwrap(),
            PotentialFamily::shaking(0.5, 9.42, -2.0, 0.1).unwrap(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn derivatives_match_finite_differences(
            x in -8.0f64..8.0,
            lam in -1.0f64..1.5,
            family_idx in 0usize..2,
        ) {
            let f = &families()[family_idx];
            let h = 1e-5;
            let fd1 = (f.value_at(x, lam + h) - f.value_at(x, lam - h)) / (2.0 * h);
            let an1 = f.d_lambda_at(x, lam);
            let scale1 = an1.abs().max(1e-2);
            prop_assert!((fd1 - an1).abs() <= 1e-6 * scale1, "d1: {fd1} vs {an1}");

            // wider step for the second difference: it divides by h^2,
            // so rounding in V dominates below h ~ 1e-4
            let h2 = 1e-4;
            let fd2 = (f.value_at(x, lam + h2) - 2.0 * f.value_at(x, lam) + f.value_at(x, lam - h2)) / (h2 * h2);
            let an2 = f.d2_lambda_at(x, lam);
            let scale2 = an2.abs().max(1.0);
            prop_assert!((fd2 - an2).abs() <= 1e-4 * scale2, "d2: {fd2} vs {an2}");
        }
    }
}
