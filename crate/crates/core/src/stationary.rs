//! Stationary states of the mean-field equation at a fixed control
//! value, computed by imaginary-time propagation with renormalization.
//!
//! Excited states are kept orthogonal to all lower states by projection
//! after every imaginary-time step; in a symmetric trap the parity of
//! the target state is enforced as well. Convergence is measured by the
//! residual `|| H[psi] psi - mu psi ||` with `mu` the chemical
//! potential.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::fft::FftWorkspace;
use crate::grid::SpatialGrid;
use crate::potential::PotentialFamily;
use crate::wavefunction::{FieldRole, PhysicalParams, WaveFunction};

/// Stationary-solver settings. Imaginary-time stages walk from coarse
/// to fine steps; since the splitting scheme's fixed point carries a
/// bias quadratic in the step, a Rayleigh-Ritz polish on the span of
/// the state and its residual (using the exact discrete Hamiltonian)
/// finishes the convergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationaryConfig {
    /// (imaginary time step, maximum steps) per stage.
    pub stages: Vec<(f64, usize)>,
    /// Target residual ||H psi - mu psi||.
    pub residual_target: f64,
    /// Cap on polish steps after the imaginary-time stages.
    pub max_polish_steps: usize,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            stages: vec![(0.05, 4000), (0.01, 8000), (2e-3, 20000)],
            residual_target: 1e-6,
            max_polish_steps: 200_000,
        }
    }
}

/// A converged stationary state with its energy bookkeeping.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub state: WaveFunction,
    /// Mean-field energy functional value.
    pub energy: f64,
    /// Chemical potential (Lagrange multiplier of the norm constraint).
    pub chemical_potential: f64,
    /// Final residual ||H psi - mu psi||.
    pub residual: f64,
    pub steps: usize,
}

/// Ground state of the mean-field equation in `V(., lambda)`.
pub fn ground_state(
    potential: &PotentialFamily,
    lambda: f64,
    phys: PhysicalParams,
    grid: &SpatialGrid,
    config: &StationaryConfig,
) -> Result<StationaryState, ModelError> {
    solve(potential, lambda, phys, grid, 0, config)
}

/// Excited stationary state of the given order (1 = first excited).
pub fn excited_state(
    potential: &PotentialFamily,
    lambda: f64,
    phys: PhysicalParams,
    grid: &SpatialGrid,
    order: usize,
    config: &StationaryConfig,
) -> Result<StationaryState, ModelError> {
    solve(potential, lambda, phys, grid, order, config)
}

fn solve(
    potential: &PotentialFamily,
    lambda: f64,
    phys: PhysicalParams,
    grid: &SpatialGrid,
    order: usize,
    config: &StationaryConfig,
) -> Result<StationaryState, ModelError> {
    potential.check_lambda(lambda)?;
    let mut lower = Vec::with_capacity(order);
    let mut result = None;
    for k in 0..=order {
        let st = solve_level(potential, lambda, phys, grid, k, &lower, config)?;
        if k == order {
            result = Some(st);
        } else {
            lower.push(st.state.clone());
        }
    }
    Ok(result.expect("loop covers the requested order"))
}

fn solve_level(
    potential: &PotentialFamily,
    lambda: f64,
    phys: PhysicalParams,
    grid: &SpatialGrid,
    order: usize,
    lower: &[WaveFunction],
    config: &StationaryConfig,
) -> Result<StationaryState, ModelError> {
    let n = grid.n_points();
    let dx = grid.dx();
    let v: Vec<f64> = potential.evaluate(grid, lambda)?;
    let kinetic: Vec<f64> = grid
        .wavenumbers()
        .iter()
        .map(|k| k * k / (2.0 * phys.mass))
        .collect();
    let mut fft = FftWorkspace::new(n);

    let parity = if grid.is_symmetric() && potential.is_symmetric_at(lambda) {
        Some(order % 2) // 0 even, 1 odd
    } else {
        None
    };

    let mut state = initial_guess(grid, &v, order);
    enforce_constraints(grid, &mut state, lower, parity, dx);
    normalize(&mut state, dx);

    let mut steps = 0usize;
    let mut residual = f64::INFINITY;
    for &(dtau, max_steps) in &config.stages {
        let half_kin: Vec<f64> = kinetic.iter().map(|t| (-t * dtau / 2.0).exp()).collect();
        let mut stalled = 0usize;
        let mut last_checked = f64::INFINITY;
        for step in 0..max_steps {
            // Strang step in imaginary time
            fft.forward(&mut state);
            for (a, f) in state.iter_mut().zip(&half_kin) {
                *a *= f;
            }
            fft.inverse(&mut state);
            for (a, &vj) in state.iter_mut().zip(&v) {
                let w = (-(vj + phys.kappa * a.norm_sqr()) * dtau).exp();
                *a *= w;
            }
            fft.forward(&mut state);
            for (a, f) in state.iter_mut().zip(&half_kin) {
                *a *= f;
            }
            fft.inverse(&mut state);

            enforce_constraints(grid, &mut state, lower, parity, dx);
            normalize(&mut state, dx);
            steps += 1;

            if step % 50 == 49 || step + 1 == max_steps {
                residual = residual_norm(&mut fft, &state, &v, &kinetic, phys.kappa, dx);
                if residual < config.residual_target {
                    break;
                }
                // move to a finer stage once progress stalls
                if residual > 0.999 * last_checked {
                    stalled += 1;
                    if stalled >= 3 {
                        break;
                    }
                } else {
                    stalled = 0;
                }
                last_checked = residual;
            }
        }
        if residual < config.residual_target {
            break;
        }
    }

    residual = polish(
        &mut fft,
        grid,
        &mut state,
        &v,
        &kinetic,
        phys.kappa,
        dx,
        lower,
        parity,
        config,
        &mut steps,
    );
    if !residual.is_finite() || residual > config.residual_target {
        return Err(ModelError::StationaryNotConverged {
            residual,
            target: config.residual_target,
            iterations: steps,
        });
    }

    let (energy, mu) = energies(&mut fft, &state, &v, &kinetic, phys.kappa, dx);
    let wf = WaveFunction::new(grid.clone(), state, FieldRole::State)?;
    Ok(StationaryState {
        state: wf,
        energy,
        chemical_potential: mu,
        residual,
        steps,
    })
}

fn initial_guess(grid: &SpatialGrid, v: &[f64], order: usize) -> Vec<Complex64> {
    // Gaussian of moderate width centered on the potential minimum,
    // multiplied by x^order to seed the right nodal structure.
    let j_min = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(j, _)| j)
        .unwrap_or(0);
    let x0 = grid.x(j_min);
    let width = 0.1 * (grid.x_max() - grid.x_min());
    grid.points()
        .iter()
        .map(|&x| {
            let u = (x - x0) / width;
            let poly = if order == 0 { 1.0 } else { (x - x0).powi(order as i32) };
            Complex64::new(poly * (-u * u).exp(), 0.0)
        })
        .collect()
}

fn enforce_constraints(
    grid: &SpatialGrid,
    state: &mut [Complex64],
    lower: &[WaveFunction],
    parity: Option<usize>,
    dx: f64,
) {
    if let Some(par) = parity {
        let n = state.len();
        let sign = if par == 0 { 1.0 } else { -1.0 };
        for j in 0..=n / 2 {
            let m = grid.mirror_index(j);
            if m == j {
                if sign < 0.0 {
                    state[j] = Complex64::default();
                }
                continue;
            }
            let a = state[j];
            let b = state[m];
            let sym = 0.5 * (a + sign * b);
            state[j] = sym;
            state[m] = sign * sym;
        }
    }
    for low in lower {
        let overlap = crate::wavefunction::inner_product_raw(low.amplitudes(), state, dx);
        for (s, l) in state.iter_mut().zip(low.amplitudes()) {
            *s -= overlap * l;
        }
    }
}

fn normalize(state: &mut [Complex64], dx: f64) {
    let norm_sq: f64 = state.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx;
    let scale = 1.0 / norm_sq.sqrt();
    for a in state.iter_mut() {
        *a *= scale;
    }
}

/// Locally optimal preconditioned refinement: per step the density is
/// frozen, the residual is preconditioned by the inverse shifted
/// kinetic operator, and the exact smallest Ritz pair is taken in the
/// span of the state, the preconditioned residual and the previous
/// update direction. The fixed point is an eigenstate of the exact
/// discrete Hamiltonian, which removes the step-size bias of the
/// imaginary-time stages.
#[allow(clippy::too_many_arguments)]
fn polish(
    fft: &mut FftWorkspace,
    grid: &SpatialGrid,
    state: &mut Vec<Complex64>,
    v: &[f64],
    kinetic: &[f64],
    kappa: f64,
    dx: f64,
    lower: &[WaveFunction],
    parity: Option<usize>,
    config: &StationaryConfig,
    steps: &mut usize,
) -> f64 {
    let n = state.len();
    let mut best = state.clone();
    let mut best_residual = f64::INFINITY;
    let mut window_best = f64::INFINITY;
    let window = 200usize;
    let mut prev_dir: Option<Vec<Complex64>> = None;

    let apply_frozen = |fft: &mut FftWorkspace, density: &[f64], x: &[Complex64]| {
        let mut out = apply_hamiltonian_linear(fft, x, v, kinetic);
        if kappa != 0.0 {
            for (o, (&nj, xj)) in out.iter_mut().zip(density.iter().zip(x)) {
                *o += kappa * nj * xj;
            }
        }
        out
    };

    for step in 0..config.max_polish_steps {
        let density: Vec<f64> = state.iter().map(|a| a.norm_sqr()).collect();
        let h_psi = apply_frozen(fft, &density, state);
        let mu = crate::wavefunction::inner_product_raw(state, &h_psi, dx).re;
        let mut r: Vec<Complex64> = state
            .iter()
            .zip(&h_psi)
            .map(|(s, h)| h - mu * s)
            .collect();
        enforce_constraints(grid, &mut r, lower, parity, dx);
        let rn = (r.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx).sqrt();
        *steps += 1;

        if rn < best_residual {
            best_residual = rn;
            best.copy_from_slice(state);
        }
        if rn < config.residual_target {
            break;
        }
        if step % window == window - 1 {
            if best_residual > 0.99 * window_best {
                break;
            }
            window_best = best_residual;
        }

        // precondition with the inverse shifted kinetic operator
        fft.forward(&mut r);
        let shift = mu.abs().max(1.0);
        for (a, &t) in r.iter_mut().zip(kinetic) {
            *a /= t + shift;
        }
        fft.inverse(&mut r);
        enforce_constraints(grid, &mut r, lower, parity, dx);

        // orthonormal basis {psi, w, p} by Gram-Schmidt
        let mut basis: Vec<Vec<Complex64>> = vec![state.clone()];
        for cand in [Some(r), prev_dir.take()].into_iter().flatten() {
            let mut cand = cand;
            for b in &basis {
                let ov = crate::wavefunction::inner_product_raw(b, &cand, dx);
                for (c, bj) in cand.iter_mut().zip(b) {
                    *c -= ov * bj;
                }
            }
            let nrm = (cand.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx).sqrt();
            if nrm > 1e-10 {
                let inv = 1.0 / nrm;
                for c in cand.iter_mut() {
                    *c *= inv;
                }
                basis.push(cand);
            }
        }
        if basis.len() < 2 {
            break;
        }

        // Rayleigh-Ritz in the subspace (real symmetric: states and the
        // Hamiltonian action are real up to a global phase)
        let dim = basis.len();
        let h_basis: Vec<Vec<Complex64>> = basis
            .iter()
            .map(|b| apply_frozen(fft, &density, b))
            .collect();
        let mut a = [[0.0f64; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                a[i][j] =
                    crate::wavefunction::inner_product_raw(&basis[i], &h_basis[j], dx).re;
            }
        }
        // symmetrize against rounding
        for i in 0..dim {
            for j in (i + 1)..dim {
                let m = 0.5 * (a[i][j] + a[j][i]);
                a[i][j] = m;
                a[j][i] = m;
            }
        }
        let coeffs = smallest_eigvec(&a, dim);

        let mut new_state = vec![Complex64::default(); n];
        let mut dir = vec![Complex64::default(); n];
        for (i, b) in basis.iter().enumerate() {
            let c = coeffs[i];
            if c == 0.0 {
                continue;
            }
            for j in 0..n {
                new_state[j] += c * b[j];
                if i > 0 {
                    dir[j] += c * b[j];
                }
            }
        }
        state.copy_from_slice(&new_state);
        enforce_constraints(grid, state, lower, parity, dx);
        normalize(state, dx);
        prev_dir = Some(dir);
    }

    state.copy_from_slice(&best);
    best_residual
}

/// Smallest eigenvector of a small symmetric matrix via Jacobi sweeps.
fn smallest_eigvec(a: &[[f64; 3]; 3], dim: usize) -> [f64; 3] {
    let mut m = *a;
    let mut v = [[0.0f64; 3]; 3];
    for (i, row) in v.iter_mut().enumerate().take(dim) {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        // largest off-diagonal element
        let (mut p, mut q, mut max) = (0, 1, 0.0f64);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if m[i][j].abs() > max {
                    max = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if max < 1e-14 {
            break;
        }
        let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for k in 0..dim {
            let (mkp, mkq) = (m[k][p], m[k][q]);
            m[k][p] = c * mkp - s * mkq;
            m[k][q] = s * mkp + c * mkq;
        }
        for k in 0..dim {
            let (mpk, mqk) = (m[p][k], m[q][k]);
            m[p][k] = c * mpk - s * mqk;
            m[q][k] = s * mpk + c * mqk;
        }
        for row in v.iter_mut().take(dim) {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    let mut min_i = 0;
    for i in 1..dim {
        if m[i][i] < m[min_i][min_i] {
            min_i = i;
        }
    }
    let mut out = [0.0f64; 3];
    for (i, row) in v.iter().enumerate().take(dim) {
        out[i] = row[min_i];
    }
    out
}

/// Applies the linear part `K + V` of the Hamiltonian.
fn apply_hamiltonian_linear(
    fft: &mut FftWorkspace,
    state: &[Complex64],
    v: &[f64],
    kinetic: &[f64],
) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = state.to_vec();
    fft.forward(&mut out);
    for (a, &t) in out.iter_mut().zip(kinetic) {
        *a *= t;
    }
    fft.inverse(&mut out);
    for (j, a) in out.iter_mut().enumerate() {
        *a += v[j] * state[j];
    }
    out
}

/// Applies the mean-field Hamiltonian `H[psi] = K + V + kappa |psi|^2`
/// to `psi`.
fn apply_hamiltonian(
    fft: &mut FftWorkspace,
    state: &[Complex64],
    v: &[f64],
    kinetic: &[f64],
    kappa: f64,
) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = state.to_vec();
    fft.forward(&mut out);
    for (a, &t) in out.iter_mut().zip(kinetic) {
        *a *= t;
    }
    fft.inverse(&mut out);
    for (j, a) in out.iter_mut().enumerate() {
        *a += (v[j] + kappa * state[j].norm_sqr()) * state[j];
    }
    out
}

fn residual_norm(
    fft: &mut FftWorkspace,
    state: &[Complex64],
    v: &[f64],
    kinetic: &[f64],
    kappa: f64,
    dx: f64,
) -> f64 {
    let h_psi = apply_hamiltonian(fft, state, v, kinetic, kappa);
    let mu = crate::wavefunction::inner_product_raw(state, &h_psi, dx).re;
    let res_sq: f64 = state
        .iter()
        .zip(&h_psi)
        .map(|(s, h)| (h - mu * s).norm_sqr())
        .sum::<f64>()
        * dx;
    res_sq.sqrt()
}

/// Mean-field energy and chemical potential of a normalized state.
fn energies(
    fft: &mut FftWorkspace,
    state: &[Complex64],
    v: &[f64],
    kinetic: &[f64],
    kappa: f64,
    dx: f64,
) -> (f64, f64) {
    let mut k_part = state.to_vec();
    fft.forward(&mut k_part);
    for (a, &t) in k_part.iter_mut().zip(kinetic) {
        *a *= t;
    }
    fft.inverse(&mut k_part);
    let e_kin = crate::wavefunction::inner_product_raw(state, &k_part, dx).re;
    let e_pot: f64 = state
        .iter()
        .zip(v)
        .map(|(s, &vj)| vj * s.norm_sqr())
        .sum::<f64>()
        * dx;
    let quartic: f64 = state.iter().map(|s| s.norm_sqr().powi(2)).sum::<f64>() * dx;
    let energy = e_kin + e_pot + 0.5 * kappa * quartic;
    let mu = e_kin + e_pot + kappa * quartic;
    (energy, mu)
}

/// Energy of an arbitrary state under the mean-field functional; used
/// by diagnostics and the command-line tools.
pub fn mean_field_energy(
    psi: &WaveFunction,
    potential: &PotentialFamily,
    lambda: f64,
    phys: PhysicalParams,
) -> Result<f64, ModelError> {
    let grid = psi.grid();
    let v = potential.evaluate(grid, lambda)?;
    let kinetic: Vec<f64> = grid
        .wavenumbers()
        .iter()
        .map(|k| k * k / (2.0 * phys.mass))
        .collect();
    let mut fft = FftWorkspace::new(grid.n_points());
    let (energy, _) = energies(&mut fft, psi.amplitudes(), &v, &kinetic, phys.kappa, grid.dx());
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(mass: f64, omega: f64) -> PotentialFamily {
        PotentialFamily::shaking(mass, omega, 0.0, 0.0).unwrap()
    }

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-10.0, 10.0, 256).unwrap()
    }

    #[test]
    fn harmonic_ground_energy_and_moments() {
        let phys = PhysicalParams::new(1.0, 0.0).unwrap();
        let st = ground_state(&harmonic(1.0, 1.0), 0.0, phys, &grid(), &StationaryConfig::default())
            .unwrap();
        assert!((st.energy - 0.5).abs() < 1e-6, "energy {}", st.energy);
        assert!(st.state.mean_x().abs() < 1e-6);
        assert!((st.state.mean_x_squared() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn harmonic_excited_energies() {
        let phys = PhysicalParams::new(1.0, 0.0).unwrap();
        let cfg = StationaryConfig::default();
        let g = grid();
        let e1 = excited_state(&harmonic(1.0, 1.0), 0.0, phys, &g, 1, &cfg).unwrap();
        assert!((e1.energy - 1.5).abs() < 1e-6, "first excited {}", e1.energy);
        let e2 = excited_state(&harmonic(1.0, 1.0), 0.0, phys, &g, 2, &cfg).unwrap();
        assert!((e2.energy - 2.5).abs() < 1e-5, "second excited {}", e2.energy);
    }

    #[test]
    fn excited_state_is_odd_and_orthogonal() {
        let phys = PhysicalParams::new(0.5, std::f64::consts::FRAC_PI_2).unwrap();
        let family = PotentialFamily::shaking(0.5, 9.42, -2.0, 0.1).unwrap();
        let cfg = StationaryConfig::default();
        let g = grid();
        let gs = ground_state(&family, 0.0, phys, &g, &cfg).unwrap();
        let ex = excited_state(&family, 0.0, phys, &g, 1, &cfg).unwrap();
        let overlap = crate::wavefunction::inner_product(&gs.state, &ex.state).unwrap();
        assert!(overlap.norm() < 1e-8, "overlap {overlap}");
        // odd parity
        for j in 1..g.n_points() {
            let m = g.mirror_index(j);
            let a = ex.state.amplitudes()[j];
            let b = ex.state.amplitudes()[m];
            assert!((a + b).norm() < 1e-8, "parity violated at {j}");
        }
        assert!(ex.energy > gs.energy);
    }

    #[test]
    fn thomas_fermi_chemical_potential() {
        // strong interactions in a harmonic trap: mu close to the
        // Thomas-Fermi value (3 kappa / 4)^(2/3) (M omega^2 / 2)^(1/3)
        let mass = 1.0;
        let omega = 1.0;
        let kappa = 2.0 * std::f64::consts::PI;
        let phys = PhysicalParams::new(mass, kappa).unwrap();
        let st = ground_state(&harmonic(mass, omega), 0.0, phys, &grid(), &StationaryConfig::default())
            .unwrap();
        let mu_tf = (3.0 * kappa / 4.0).powf(2.0 / 3.0) * (mass * omega * omega / 2.0).powf(1.0 / 3.0);
        let rel = (st.chemical_potential - mu_tf).abs() / mu_tf;
        assert!(rel < 0.05, "mu {} vs TF {} (rel {rel})", st.chemical_potential, mu_tf);
    }

    #[test]
    fn non_convergence_is_an_error() {
        let phys = PhysicalParams::new(1.0, 0.0).unwrap();
        let cfg = StationaryConfig {
            stages: vec![(0.05, 3)],
            residual_target: 1e-12,
            max_polish_steps: 5,
        };
        let err = ground_state(&harmonic(1.0, 1.0), 0.0, phys, &grid(), &cfg);
        assert!(matches!(err, Err(ModelError::StationaryNotConverged { .. })));
    }
}
