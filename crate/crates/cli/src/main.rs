//! Command-line driver: stationary states, propagation, optimization
//! runs, parameter sweeps and spectral post-processing.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.
//! Log level comes from the GPE_OPTCTL_LOG environment variable
//! (error, info or debug).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use gpe_optctl_core::config;
use gpe_optctl_core::control::ControlField;
use gpe_optctl_core::dynamics::EquationCounter;
use gpe_optctl_core::error::{HarnessError, ModelError};
use gpe_optctl_core::functional::terminal_cost;
use gpe_optctl_core::harness::{self, RunConfig, SweepConfig};
use gpe_optctl_core::spectrum::power_spectrum_of;
use gpe_optctl_core::stationary::{excited_state, ground_state, StationaryState};
use gpe_optctl_core::wavefunction::FieldRole;

#[derive(Parser)]
#[command(
    name = "gpe-optctl",
    about = "Optimal control of 1D condensate dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file (problem + optimizer).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path config override, repeatable (e.g. problem.phys.kappa=6.283).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed recorded into run.json for reproducibility.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a ground state and write its density and energy.
    Ground {
        #[command(flatten)]
        common: CommonArgs,
        /// Control value at which to evaluate the potential (defaults to
        /// the problem's initial lambda).
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Compute an excited stationary state.
    Excited {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        lambda: Option<f64>,
        /// Excitation order (1 = first excited state).
        #[arg(long, default_value_t = 1)]
        order: usize,
    },
    /// Propagate the guess control (or a control file) and report the
    /// terminal cost.
    Propagate {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV file with a control trajectory: a `t` column followed by
        /// a value column (as written to control.csv). The last value
        /// column is used.
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Run one optimizer on one problem and export all result files.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a cross product of problems x optimizers x parameter values.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads (default: number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute power spectra from a finished run directory.
    Spectra {
        /// Run directory containing control.csv and run.json.
        #[arg(long)]
        run_dir: PathBuf,
        /// Output CSV path (defaults to <run_dir>/spectra.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = classify(&err);
            ExitCode::from(code)
        }
    }
}

fn init_logging() {
    let level = std::env::var("GPE_OPTCTL_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
}

/// Maps errors onto the documented exit codes: 2 for configuration
/// problems, 3 for numerical failures.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Model(m) => classify_model(m),
                _ => 2,
            };
        }
        if let Some(m) = cause.downcast_ref::<ModelError>() {
            return classify_model(m);
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn classify_model(err: &ModelError) -> u8 {
    match err {
        ModelError::NormDrift { .. }
        | ModelError::NonFinite(_)
        | ModelError::StationaryNotConverged { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ground { common, lambda } => stationary_cmd(&common, lambda, None),
        Command::Excited {
            common,
            lambda,
            order,
        } => stationary_cmd(&common, lambda, Some(order)),
        Command::Propagate { common, control } => propagate_cmd(&common, control.as_deref()),
        Command::Optimize { common } => optimize_cmd(&common),
        Command::Sweep { common, jobs } => sweep_cmd(&common, jobs),
        Command::Spectra { run_dir, out } => spectra_cmd(&run_dir, out.as_deref()),
    }
}

fn load_run_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut overrides = Vec::with_capacity(common.overrides.len());
    for o in &common.overrides {
        overrides.push(config::parse_override(o)?);
    }
    let mut cfg = config::load_config(&common.config, &overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_state_files(
    out: &Path,
    name: &str,
    state: &StationaryState,
    potential_values: &[f64],
    grid: &gpe_optctl_core::grid::SpatialGrid,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let csv_path = out.join(format!("{name}.csv"));
    let mut w = csv::WriterBuilder::new().from_path(&csv_path)?;
    w.write_record(["x", "potential", "density", "re_psi", "im_psi"])?;
    for (j, a) in state.state.amplitudes().iter().enumerate() {
        w.write_record([
            format!("{}", grid.x(j)),
            format!("{}", potential_values[j]),
            format!("{}", a.norm_sqr()),
            format!("{}", a.re),
            format!("{}", a.im),
        ])?;
    }
    w.flush()?;
    let info = serde_json::json!({
        "energy": state.energy,
        "chemical_potential": state.chemical_potential,
        "residual": state.residual,
        "solver_steps": state.steps,
    });
    std::fs::write(
        out.join(format!("{name}.json")),
        serde_json::to_string_pretty(&info)?,
    )?;
    println!(
        "{name}: energy = {:.9}, chemical potential = {:.9}, residual = {:.3e}",
        state.energy, state.chemical_potential, state.residual
    );
    Ok(())
}

fn stationary_cmd(
    common: &CommonArgs,
    lambda: Option<f64>,
    order: Option<usize>,
) -> anyhow::Result<()> {
    let cfg = load_run_config(common)?;
    let spec = &cfg.problem;
    let lambda = lambda.unwrap_or_else(|| match order {
        None => spec.initial.lambda(),
        Some(_) => spec.desired.lambda(),
    });
    let state = match order {
        None => ground_state(
            &spec.potential,
            lambda,
            spec.phys,
            &spec.grid,
            &spec.stationary,
        )?,
        Some(order) => excited_state(
            &spec.potential,
            lambda,
            spec.phys,
            &spec.grid,
            order,
            &spec.stationary,
        )?,
    };
    let v = spec.potential.evaluate(&spec.grid, lambda)?;
    let name = match order {
        None => "ground".to_string(),
        Some(o) => format!("excited_{o}"),
    };
    write_state_files(&common.out, &name, &state, &v, &spec.grid)
}

fn read_control_csv(path: &Path, expected_nodes: usize) -> anyhow::Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let last = record
            .iter()
            .last()
            .ok_or_else(|| anyhow::anyhow!("empty row in {}", path.display()))?;
        values.push(last.parse::<f64>()?);
    }
    anyhow::ensure!(
        values.len() == expected_nodes,
        "control file has {} rows, problem expects {} time nodes",
        values.len(),
        expected_nodes
    );
    Ok(values)
}

fn propagate_cmd(common: &CommonArgs, control_path: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_run_config(common)?;
    let problem = cfg.problem.prepare()?;
    let control = match control_path {
        None => problem.guess.clone(),
        Some(path) => {
            let values = read_control_csv(path, cfg.problem.time.n_nodes())?;
            ControlField::new(cfg.problem.time.clone(), values, true)?
        }
    };
    let mut prop = problem.propagator();
    let mut counter = EquationCounter::new();
    let traj = prop.propagate_forward(problem.initial_state(), &control, &mut counter)?;
    let psi_t = traj.terminal_state(&cfg.problem.grid, FieldRole::State)?;
    let jt = terminal_cost(&psi_t, problem.desired_state())?;
    println!("terminal cost J_T = {jt:.9e}");

    std::fs::create_dir_all(&common.out)?;
    // reuse the harness exporters by assembling a minimal run
    let density_dir = &common.out;
    write_density(density_dir, &traj, &cfg)?;
    Ok(())
}

fn write_density(
    out: &Path,
    traj: &gpe_optctl_core::dynamics::Trajectory,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    use std::io::Write as _;
    let bin_path = out.join("density.bin");
    let mut file = std::fs::File::create(&bin_path)?;
    for i in 0..traj.n_nodes() {
        let mut buf = Vec::with_capacity(traj.n_points() * 8);
        for a in traj.node(i) {
            buf.extend_from_slice(&a.norm_sqr().to_le_bytes());
        }
        file.write_all(&buf)?;
    }
    let meta = serde_json::json!({
        "file": "density.bin",
        "dtype": "f64_le",
        "layout": "row_major_time_by_x",
        "n_time": traj.n_nodes(),
        "n_x": traj.n_points(),
        "x_min": cfg.problem.grid.x_min(),
        "x_max": cfg.problem.grid.x_max(),
        "dx": cfg.problem.grid.dx(),
        "dt": cfg.problem.time.dt(),
        "t_final": cfg.problem.time.t_final(),
    });
    std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn optimize_cmd(common: &CommonArgs) -> anyhow::Result<()> {
    let cfg = load_run_config(common)?;
    log::info!(
        "optimizing problem '{}' with {}",
        cfg.problem.name,
        cfg.optimizer.kind_name()
    );
    let run = harness::run_experiment(&cfg)?;
    harness::export_results(&run, &common.out)?;
    let trace = run.trace();
    println!(
        "{}: status {:?}, final J_T = {:.6e}, {} equations solved, results in {}",
        cfg.problem.name,
        trace.status,
        trace.final_j_terminal().unwrap_or(f64::NAN),
        run.outcome.counter.n_total(),
        common.out.display()
    );
    Ok(())
}

fn sweep_cmd(common: &CommonArgs, jobs: Option<usize>) -> anyhow::Result<()> {
    let raw = config::load_json(&common.config)?;
    let sweep: SweepConfig = serde_json::from_value(raw)?;
    anyhow::ensure!(
        common.overrides.is_empty(),
        "sweep configs take their variations from the axes; overrides are not supported here"
    );
    let summaries = harness::run_sweep(&sweep, &common.out, jobs)?;
    for s in &summaries {
        println!(
            "{}: status {:?}, final J_T = {:.6e}, n = {}",
            s.name,
            s.status,
            s.final_j_terminal.unwrap_or(f64::NAN),
            s.n_total
        );
    }
    Ok(())
}

fn spectra_cmd(run_dir: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let run_json: Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run.json"))?)?;
    let n_steps = run_json["problem"]["time"]["n_steps"]
        .as_u64()
        .ok_or_else(|| anyhow::anyhow!("run.json lacks problem.time.n_steps"))?;
    let t_final = run_json["problem"]["time"]["t_final"]
        .as_f64()
        .ok_or_else(|| anyhow::anyhow!("run.json lacks problem.time.t_final"))?;
    let dt = t_final / n_steps as f64;

    let control_path = run_dir.join("control.csv");
    let mut rdr = csv::Reader::from_path(&control_path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let n_cols = headers.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_cols];
    for record in rdr.records() {
        let record = record?;
        for (i, field) in record.iter().enumerate() {
            columns[i].push(field.parse::<f64>()?);
        }
    }

    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("spectra.csv"));
    let mut w = csv::WriterBuilder::new().from_path(&out_path)?;
    let first_spectrum = power_spectrum_of(&columns[1], dt);
    let mut header = vec!["snapshot".to_string(), "bandwidth".to_string()];
    header.extend(
        first_spectrum
            .frequencies
            .iter()
            .map(|f| format!("nu_{f:.6}")),
    );
    w.write_record(&header)?;
    for (name, col) in headers.iter().zip(&columns).skip(1) {
        let spec = power_spectrum_of(col, dt);
        let mut rec = vec![name.clone(), format!("{}", spec.bandwidth())];
        rec.extend(spec.power.iter().map(|p| format!("{p}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("spectra written to {}", out_path.display());
    Ok(())
}
