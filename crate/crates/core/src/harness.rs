//! Experiment harness: runs one optimizer on one problem, exports
//! deterministic result files and drives parameter sweeps.
//!
//! Exported files per run:
//! * `trace.csv` - one row per optimizer iteration (fixed columns, no
//!   wall times, byte-reproducible across runs)
//! * `control.csv` - time column plus one column per control snapshot
//! * `spectra.csv` - power spectrum and bandwidth per snapshot
//! * `density.bin` + `meta.json` - terminal `|psi(x,t)|^2` map as raw
//!   little-endian f64 with a JSON sidecar describing the layout
//! * `run.json` - the fully resolved configuration
//! * `summary.json` - final costs, counters and boundary-state data
//! * `timings.csv` - wall-clock per iteration (not deterministic)

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::ControlField;
use crate::dynamics::{EquationCounter, Trajectory};
use crate::error::HarnessError;
use crate::grape::{optimize_grape, GrapeConfig};
use crate::krotov::{optimize_hybrid, optimize_krotov, KrotovConfig};
use crate::problem::{Problem, ProblemSpec};
use crate::spectrum::{power_spectrum_of, PowerSpectrum};
use crate::trace::{ControlSnapshot, OptimizerOutcome, RunTrace, TerminationStatus};
use crate::wavefunction::WaveFunction;

/// Optimizer selection for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Grape(GrapeConfig),
    Krotov(KrotovConfig),
    Hybrid {
        krotov: KrotovConfig,
        grape: GrapeConfig,
        switch_after: usize,
    },
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), crate::error::ModelError> {
        match self {
            OptimizerConfig::Grape(g) => g.validate(),
            OptimizerConfig::Krotov(k) => k.validate(),
            OptimizerConfig::Hybrid { krotov, grape, .. } => {
                krotov.validate()?;
                grape.validate()
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OptimizerConfig::Grape(_) => "grape",
            OptimizerConfig::Krotov(_) => "krotov",
            OptimizerConfig::Hybrid { .. } => "hybrid",
        }
    }
}

/// A fully resolved run: problem, optimizer and reproducibility seed.
/// The seed is recorded in `run.json`; the bundled problems and
/// optimizers are deterministic and do not consume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Everything produced by one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: RunConfig,
    pub problem: Problem,
    pub outcome: OptimizerOutcome,
    /// Propagation of the final control, stored for density export.
    pub final_trajectory: Trajectory,
}

impl ExperimentRun {
    pub fn trace(&self) -> &RunTrace {
        &self.outcome.trace
    }
}

/// Prepares the problem, runs the configured optimizer and propagates
/// the final control once more for the density map.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentRun, HarnessError> {
    config.optimizer.validate()?;
    let problem = config.problem.prepare()?;
    let outcome = match &config.optimizer {
        OptimizerConfig::Grape(g) => optimize_grape(&problem, &problem.guess, g)?,
        OptimizerConfig::Krotov(k) => optimize_krotov(&problem, &problem.guess, k)?,
        OptimizerConfig::Hybrid {
            krotov,
            grape,
            switch_after,
        } => optimize_hybrid(&problem, &problem.guess, krotov, grape, *switch_after)?,
    };

    // counter audit: the trace must account for every recorded solve
    if let Some(last) = outcome.trace.last() {
        if last.n_total() != outcome.counter.n_total() {
            return Err(HarnessError::Config(format!(
                "counter audit failed: trace ends at {} solves, counter reports {}",
                last.n_total(),
                outcome.counter.n_total()
            )));
        }
    }

    let mut scratch = EquationCounter::new();
    let mut prop = problem.propagator();
    let (_, final_trajectory) =
        problem.evaluate_control(&mut prop, &outcome.control, &mut scratch)?;
    Ok(ExperimentRun {
        config: config.clone(),
        problem,
        outcome,
        final_trajectory,
    })
}

/// Power spectra of a sequence of control snapshots, one row per
/// snapshot, with a bandwidth summary per row.
#[derive(Debug, Clone)]
pub struct SpectralHistory {
    pub frequencies: Vec<f64>,
    pub rows: Vec<SpectralRow>,
}

#[derive(Debug, Clone)]
pub struct SpectralRow {
    pub iteration: usize,
    pub bandwidth: f64,
    pub power: Vec<f64>,
}

pub fn spectral_history(snapshots: &[ControlSnapshot], dt: f64) -> SpectralHistory {
    let mut frequencies = Vec::new();
    let rows = snapshots
        .iter()
        .map(|snap| {
            let PowerSpectrum {
                frequencies: f,
                power,
            } = power_spectrum_of(&snap.values, dt);
            let bandwidth = PowerSpectrum {
                frequencies: f.clone(),
                power: power.clone(),
            }
            .bandwidth();
            if frequencies.is_empty() {
                frequencies = f;
            }
            SpectralRow {
                iteration: snap.iteration,
                bandwidth,
                power,
            }
        })
        .collect();
    SpectralHistory { frequencies, rows }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes all result files for one run into `out_dir` (created if
/// missing).
pub fn export_results(run: &ExperimentRun, out_dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir.display().to_string(), e))?;
    write_trace_csv(run.trace(), &out_dir.join("trace.csv"))?;
    write_timings_csv(run.trace(), &out_dir.join("timings.csv"))?;
    write_control_csv(
        &run.outcome.trace.snapshots,
        &run.outcome.control,
        &out_dir.join("control.csv"),
    )?;
    write_spectra_csv(
        &spectral_history(
            &run.outcome.trace.snapshots,
            run.problem.spec.time.dt(),
        ),
        &out_dir.join("spectra.csv"),
    )?;
    write_density_map(run, out_dir)?;
    write_json(&run.config, &out_dir.join("run.json"))?;
    write_json(&RunSummary::of(run), &out_dir.join("summary.json"))?;
    Ok(())
}

/// Fixed column set of `trace.csv`.
pub const TRACE_CSV_HEADER: [&str; 14] = [
    "iteration",
    "scheme",
    "n_forward",
    "n_backward",
    "n_total",
    "j_terminal",
    "j_total",
    "penalty",
    "step_length",
    "grad_norm",
    "k",
    "newton_mean",
    "newton_max",
    "newton_fallbacks",
];

fn write_trace_csv(trace: &RunTrace, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| HarnessError::Config(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(TRACE_CSV_HEADER)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    for r in &trace.records {
        let newton_mean = r.newton.map(|n| n.mean_iterations);
        let newton_max = r.newton.map(|n| n.max_iterations as f64);
        let newton_fallbacks = r.newton.map(|n| n.fallbacks as f64);
        w.write_record([
            r.iteration.to_string(),
            r.scheme.to_string(),
            r.n_forward.to_string(),
            r.n_backward.to_string(),
            r.n_total().to_string(),
            fmt_f64(r.j_terminal),
            fmt_f64(r.j_total),
            fmt_f64(r.penalty),
            fmt_opt(r.step_length),
            fmt_opt(r.grad_norm),
            fmt_opt(r.k),
            fmt_opt(newton_mean),
            fmt_opt(newton_max),
            fmt_opt(newton_fallbacks),
        ])
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(())
}

fn write_timings_csv(trace: &RunTrace, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| HarnessError::Config(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["iteration", "wall_ms"])
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    for r in &trace.records {
        w.write_record([r.iteration.to_string(), format!("{:.3}", r.wall_ms)])
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(())
}

fn write_control_csv(
    snapshots: &[ControlSnapshot],
    final_control: &ControlField,
    path: &Path,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| HarnessError::Config(format!("cannot write {}: {e}", path.display())))?;
    let time = final_control.time_grid();
    let mut header = vec!["t".to_string()];
    for s in snapshots {
        header.push(format!("iter_{}", s.iteration));
    }
    header.push("final".to_string());
    w.write_record(&header)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    for i in 0..time.n_nodes() {
        let mut row = vec![fmt_f64(time.t(i))];
        for s in snapshots {
            row.push(fmt_f64(s.values[i]));
        }
        row.push(fmt_f64(final_control.values()[i]));
        w.write_record(&row)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(())
}

fn write_spectra_csv(history: &SpectralHistory, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| HarnessError::Config(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec!["iteration".to_string(), "bandwidth".to_string()];
    for f in &history.frequencies {
        header.push(format!("nu_{f:.6}"));
    }
    w.write_record(&header)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    for row in &history.rows {
        let mut rec = vec![row.iteration.to_string(), fmt_f64(row.bandwidth)];
        rec.extend(row.power.iter().map(|p| fmt_f64(*p)));
        w.write_record(&rec)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DensityMeta {
    file: String,
    dtype: &'static str,
    layout: &'static str,
    n_time: usize,
    n_x: usize,
    x_min: f64,
    x_max: f64,
    dx: f64,
    dt: f64,
    t_final: f64,
}

fn write_density_map(run: &ExperimentRun, out_dir: &Path) -> Result<(), HarnessError> {
    let traj = &run.final_trajectory;
    let grid = &run.problem.spec.grid;
    let time = &run.problem.spec.time;
    let bin_path = out_dir.join("density.bin");
    let mut file = fs::File::create(&bin_path)
        .map_err(|e| HarnessError::io(bin_path.display().to_string(), e))?;
    let mut buf = Vec::with_capacity(traj.n_points() * 8);
    for i in 0..traj.n_nodes() {
        buf.clear();
        for a in traj.node(i) {
            buf.extend_from_slice(&a.norm_sqr().to_le_bytes());
        }
        file.write_all(&buf)
            .map_err(|e| HarnessError::io(bin_path.display().to_string(), e))?;
    }
    let meta = DensityMeta {
        file: "density.bin".into(),
        dtype: "f64_le",
        layout: "row_major_time_by_x",
        n_time: traj.n_nodes(),
        n_x: traj.n_points(),
        x_min: grid.x_min(),
        x_max: grid.x_max(),
        dx: grid.dx(),
        dt: time.dt(),
        t_final: time.t_final(),
    };
    write_json(&meta, &out_dir.join("meta.json"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    let file =
        fs::File::create(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Final outcome digest written to `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub optimizer: String,
    pub status: Option<TerminationStatus>,
    pub final_j_terminal: Option<f64>,
    pub final_j_total: Option<f64>,
    pub n_forward: u64,
    pub n_backward: u64,
    pub n_total: u64,
    pub iterations: usize,
    pub k_halvings: u32,
    pub initial_energy: f64,
    pub desired_energy: f64,
    pub initial_chemical_potential: f64,
    pub desired_chemical_potential: f64,
    pub lambda_unit: String,
}

impl RunSummary {
    pub fn of(run: &ExperimentRun) -> Self {
        let trace = run.trace();
        Self {
            problem: run.problem.spec.name.clone(),
            optimizer: run.config.optimizer.kind_name().to_string(),
            status: trace.status,
            final_j_terminal: trace.final_j_terminal(),
            final_j_total: trace.last().map(|r| r.j_total),
            n_forward: run.outcome.counter.n_forward(),
            n_backward: run.outcome.counter.n_backward(),
            n_total: run.outcome.counter.n_total(),
            iterations: trace.records.len(),
            k_halvings: trace.k_halvings,
            initial_energy: run.problem.initial.energy,
            desired_energy: run.problem.desired.energy,
            initial_chemical_potential: run.problem.initial.chemical_potential,
            desired_chemical_potential: run.problem.desired.chemical_potential,
            lambda_unit: run.problem.spec.potential.lambda_unit().to_string(),
        }
    }
}

/// One axis of a sweep: a dotted JSON path and the values it takes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepAxis {
    pub path: String,
    #[serde(default)]
    pub tag: Option<String>,
    pub values: Vec<Value>,
}

/// Cross-product sweep over a base run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Base run configuration (same schema as a single-run config).
    pub base: Value,
    pub axes: Vec<SweepAxis>,
}

/// Digest of one sweep member.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRunSummary {
    pub name: String,
    pub dir: PathBuf,
    pub status: Option<TerminationStatus>,
    pub final_j_terminal: Option<f64>,
    pub n_total: u64,
}

fn axis_value_label(v: &Value) -> String {
    let raw = match v {
        Value::String(s) => s.clone(),
        Value::Object(map) => map
            .get("kind")
            .and_then(|k| k.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| "obj".into()),
        other => other.to_string(),
    };
    raw.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Runs the cross product of all axes, one run per combination, in
/// parallel. Each run writes into `out_root/<combination-name>/`.
pub fn run_sweep(
    sweep: &SweepConfig,
    out_root: &Path,
    jobs: Option<usize>,
) -> Result<Vec<SweepRunSummary>, HarnessError> {
    let mut combos: Vec<(String, Value)> = vec![(String::new(), sweep.base.clone())];
    for (ai, axis) in sweep.axes.iter().enumerate() {
        let tag = axis.tag.clone().unwrap_or_else(|| format!("axis{ai}"));
        let mut next = Vec::with_capacity(combos.len() * axis.values.len());
        for (name, value) in &combos {
            for v in &axis.values {
                let mut value = value.clone();
                crate::config::set_json_path(&mut value, &axis.path, v.clone())?;
                let label = format!("{tag}-{}", axis_value_label(v));
                let name = if name.is_empty() {
                    label
                } else {
                    format!("{name}_{label}")
                };
                next.push((name, value));
            }
        }
        combos = next;
    }

    fs::create_dir_all(out_root)
        .map_err(|e| HarnessError::io(out_root.display().to_string(), e))?;

    let worker = |(name, value): &(String, Value)| -> Result<SweepRunSummary, HarnessError> {
        let config = crate::config::resolve_config(value.clone(), &[])?;
        let run = run_experiment(&config)?;
        let dir = out_root.join(if name.is_empty() { "run" } else { name });
        export_results(&run, &dir)?;
        Ok(SweepRunSummary {
            name: name.clone(),
            dir,
            status: run.trace().status,
            final_j_terminal: run.trace().final_j_terminal(),
            n_total: run.outcome.counter.n_total(),
        })
    };

    let results: Vec<Result<SweepRunSummary, HarnessError>> = match jobs {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            pool.install(|| combos.par_iter().map(worker).collect())
        }
        _ => combos.par_iter().map(worker).collect(),
    };

    let mut summaries = Vec::with_capacity(results.len());
    for r in results {
        summaries.push(r?);
    }
    write_json(&summaries, &out_root.join("sweep_summary.json"))?;
    Ok(summaries)
}

/// Number of pronounced local maxima in the density of a state.
pub fn density_maxima_count(psi: &WaveFunction, threshold_frac: f64) -> usize {
    let density = psi.density();
    let peak = density.iter().cloned().fold(0.0_f64, f64::max);
    let floor = threshold_frac * peak;
    let mut count = 0;
    for j in 1..density.len() - 1 {
        if density[j] > floor && density[j] > density[j - 1] && density[j] >= density[j + 1] {
            count += 1;
        }
    }
    count
}

/// Number of interior sign changes (nodes) of a state, after removing
/// its global phase. Points below `floor_frac` times the peak amplitude
/// are ignored.
pub fn node_count(psi: &WaveFunction, floor_frac: f64) -> usize {
    let amps = psi.amplitudes();
    let (j_peak, peak) = amps
        .iter()
        .enumerate()
        .map(|(j, a)| (j, a.norm()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let phase = amps[j_peak] / peak;
    let floor = floor_frac * peak;
    let mut last_sign = 0i8;
    let mut count = 0;
    for a in amps {
        if a.norm() < floor {
            continue;
        }
        let re = (a / phase).re;
        let sign = if re > 0.0 { 1 } else { -1 };
        if last_sign != 0 && sign != last_sign {
            count += 1;
        }
        last_sign = sign;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::wavefunction::FieldRole;
    use num_complex::Complex64;

    #[test]
    fn maxima_and_node_analysis() {
        let grid = SpatialGrid::new(-8.0, 8.0, 256).unwrap();
        // two-hump density: sum of displaced Gaussians
        let double = WaveFunction::normalized(
            grid.clone(),
            grid.points()
                .iter()
                .map(|&x| {
                    Complex64::new(
                        (-(x - 2.5) * (x - 2.5)).exp() + (-(x + 2.5) * (x + 2.5)).exp(),
                        0.0,
                    )
                })
                .collect(),
            FieldRole::State,
        )
        .unwrap();
        assert_eq!(density_maxima_count(&double, 0.2), 2);
        assert_eq!(node_count(&double, 0.05), 0);

        // odd state: one node
        let odd = WaveFunction::normalized(
            grid.clone(),
            grid.points()
                .iter()
                .map(|&x| Complex64::new(x * (-x * x / 2.0).exp(), 0.0))
                .collect(),
            FieldRole::State,
        )
        .unwrap();
        assert_eq!(node_count(&odd, 0.02), 1);
        assert_eq!(density_maxima_count(&odd, 0.2), 2);
    }

    #[test]
    fn spectral_history_of_constant_control() {
        let snaps = vec![ControlSnapshot {
            iteration: 0,
            values: vec![2.0; 101],
        }];
        let hist = spectral_history(&snaps, 0.02);
        assert_eq!(hist.rows.len(), 1);
        assert!(hist.rows[0].bandwidth < 1e-6);
        assert!(hist.rows[0].power[0] > 0.0);
        let dc = hist.rows[0].power[0];
        assert!(hist.rows[0].power[1..].iter().all(|&p| p < 1e-18 * dc));
    }
}
