use gpe_optctl_core::grid::SpatialGrid;
use gpe_optctl_core::potential::PotentialFamily;
use gpe_optctl_core::stationary::{excited_state, ground_state, StationaryConfig};
use gpe_optctl_core::wavefunction::PhysicalParams;

fn main() {
    let grid = SpatialGrid::new(-10.0, 10.0, 256).unwrap();
    let phys = PhysicalParams::new(0.5, std::f64::consts::FRAC_PI_2).unwrap();
    let family = PotentialFamily::shaking(0.5, 9.42, -2.0, 0.1).unwrap();
    let cfg = StationaryConfig::default();

    let t0 = std::time::Instant::now();
    match ground_state(&family, 0.0, phys, &grid, &cfg) {
        Ok(st) => println!(
            "ground: E={:.9} mu={:.9} res={:.3e} steps={} ({:?})",
            st.energy, st.chemical_potential, st.residual, st.steps, t0.elapsed()
        ),
        Err(e) => println!("ground FAILED: {e}"),
    }
    let t0 = std::time::Instant::now();
    match excited_state(&family, 0.0, phys, &grid, 1, &cfg) {
        Ok(st) => println!(
            "excited: E={:.9} mu={:.9} res={:.3e} steps={} ({:?})",
            st.energy, st.chemical_potential, st.residual, st.steps, t0.elapsed()
        ),
        Err(e) => println!("excited FAILED: {e}"),
    }

    // splitting traps at both endpoints
    let split = PotentialFamily::splitting(10.0, 0.8).unwrap();
    for (kappa, lam) in [(std::f64::consts::FRAC_PI_2, 0.0), (std::f64::consts::FRAC_PI_2, 1.0), (2.0 * std::f64::consts::PI, 1.0)] {
        let phys = PhysicalParams::new(0.5, kappa).unwrap();
        let t0 = std::time::Instant::now();
        match ground_state(&split, lam, phys, &grid, &cfg) {
            Ok(st) => println!(
                "split lam={lam} kappa={kappa:.3}: E={:.9} res={:.3e} steps={} ({:?})",
                st.energy, st.residual, st.steps, t0.elapsed()
            ),
            Err(e) => println!("split lam={lam} kappa={kappa:.3} FAILED: {e}"),
        }
    }
}
