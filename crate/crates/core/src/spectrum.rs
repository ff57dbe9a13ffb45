//! Power spectra of control time series.

use num_complex::Complex64;

use crate::control::ControlField;
use crate::fft::FftWorkspace;

/// One-sided power spectrum of a real time series, with the frequency
/// axis in cycles per ms. Normalized so that
/// `sum(power) * d_nu == sum(values^2) * dt` (discrete Parseval).
#[derive(Debug, Clone)]
pub struct PowerSpectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl PowerSpectrum {
    /// Frequency resolution of the spectrum.
    pub fn d_nu(&self) -> f64 {
        self.frequencies[1] - self.frequencies[0]
    }

    /// Total spectral weight `sum(power) * d_nu`.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.d_nu()
    }

    /// Standard deviation of the frequency under the normalized power
    /// distribution; a scalar summary of spectral width.
    pub fn bandwidth(&self) -> f64 {
        let total: f64 = self.power.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mean: f64 = self
            .frequencies
            .iter()
            .zip(&self.power)
            .map(|(f, p)| f * p)
            .sum::<f64>()
            / total;
        let var: f64 = self
            .frequencies
            .iter()
            .zip(&self.power)
            .map(|(f, p)| (f - mean) * (f - mean) * p)
            .sum::<f64>()
            / total;
        var.max(0.0).sqrt()
    }
}

/// Computes the one-sided power spectrum of a control trajectory.
pub fn power_spectrum(field: &ControlField) -> PowerSpectrum {
    power_spectrum_of(field.values(), field.time_grid().dt())
}

/// Same as [`power_spectrum`] but for a raw sample sequence.
pub fn power_spectrum_of(values: &[f64], dt: f64) -> PowerSpectrum {
    let n = values.len();
    let mut fft = FftWorkspace::new(n);
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut data);

    // One-sided folding of |dt * X_m|^2; the factor dt^2 makes the sum
    // against d_nu = 1/(n*dt) satisfy Parseval exactly.
    let d_nu = 1.0 / (n as f64 * dt);
    let n_half = n / 2 + 1;
    let mut frequencies = Vec::with_capacity(n_half);
    let mut power = Vec::with_capacity(n_half);
    for m in 0..n_half {
        frequencies.push(m as f64 * d_nu);
        let base = dt * dt * data[m].norm_sqr();
        let mirrored = n - m;
        let p = if m == 0 || mirrored == m {
            base
        } else if mirrored < n {
            base + dt * dt * data[mirrored].norm_sqr()
        } else {
            base
        };
        power.push(p);
    }
    PowerSpectrum { frequencies, power }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use proptest::prelude::*;

    fn time(n_steps: usize) -> TimeGrid {
        TimeGrid::new(2.0, n_steps).unwrap()
    }

    #[test]
    fn constant_control_is_dc_only() {
        let c = ControlField::constant(time(200), 3.0, false);
        let spec = power_spectrum(&c);
        assert!(spec.power[0] > 0.0);
        for p in &spec.power[1..] {
            assert!(*p < 1e-20 * spec.power[0]);
        }
        assert!(spec.bandwidth() < 1e-6);
    }

    #[test]
    fn on_grid_sine_occupies_a_single_bin() {
        // Pick a frequency on the DFT grid of n_nodes samples: an
        // integer number of periods must fit in (n_steps + 1) * dt.
        let t = time(199);
        let n_nodes = t.n_nodes() as f64;
        let nu0 = 5.0 / (n_nodes * t.dt());
        let c = ControlField::from_fn(t, false, |t| (2.0 * std::f64::consts::PI * nu0 * t).sin())
            .unwrap();
        let spec = power_spectrum(&c);
        let peak = spec
            .frequencies
            .iter()
            .position(|&f| (f - nu0).abs() < 1e-12)
            .expect("nu0 on the frequency grid");
        for (m, p) in spec.power.iter().enumerate() {
            if m != peak {
                assert!(*p < 1e-10 * spec.power[peak], "bin {m} leaks: {p:.3e}");
            }
        }
    }

    proptest! {
        #[test]
        fn parseval_holds(raw in proptest::collection::vec(-5.0f64..5.0, 32..200)) {
            let dt = 0.01;
            let spec = power_spectrum_of(&raw, dt);
            let time_energy: f64 = raw.iter().map(|v| v * v).sum::<f64>() * dt;
            let spec_energy = spec.total_power();
            prop_assert!((time_energy - spec_energy).abs() <= 1e-10 * time_energy.max(1e-30));
        }
    }
}
