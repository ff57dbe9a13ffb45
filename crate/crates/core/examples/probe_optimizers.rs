use gpe_optctl_core::gradient::GradientNorm;
use gpe_optctl_core::grape::{optimize_grape, GrapeConfig, SearchMethod};
use gpe_optctl_core::krotov::{optimize_krotov, KrotovConfig, UpdateMode};
use gpe_optctl_core::problem::ProblemSpec;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("splitting");
    let budget: u64 = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1500);
    let stop: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-2);

    let spec = ProblemSpec::preset(which).expect("preset name");
    let t0 = std::time::Instant::now();
    let problem = spec.prepare().expect("problem preparation");
    println!(
        "problem '{}' prepared in {:?}: E_init={:.6} E_des={:.6} J_T(guess) -> see below",
        spec.name,
        t0.elapsed(),
        problem.initial.energy,
        problem.desired.energy
    );

    for (label, run) in [
        ("grape-bfgs-h1", true),
        ("grape-bfgs-l2", true),
        ("grape-grad-h1", true),
        ("krotov-1e-3", false),
        ("krotov-5e-3", false),
    ] {
        let t0 = std::time::Instant::now();
        let outcome = if run {
            let (search, norm) = match label {
                "grape-bfgs-h1" => (SearchMethod::Bfgs, GradientNorm::H1),
                "grape-bfgs-l2" => (SearchMethod::Bfgs, GradientNorm::L2),
                _ => (SearchMethod::ConjugateGradient, GradientNorm::H1),
            };
            let mut config = GrapeConfig::new(search, norm);
            config.max_equations = budget;
            config.stop_jt = stop;
            optimize_grape(&problem, &problem.guess, &config).unwrap()
        } else {
            let k = if label == "krotov-1e-3" { 1e-3 } else { 5e-3 };
            let mut config = KrotovConfig::new(k, UpdateMode::Explicit);
            config.max_equations = budget;
            config.stop_jt = stop;
            optimize_krotov(&problem, &problem.guess, &config).unwrap()
        };
        let trace = &outcome.trace;
        let first = trace.records.first().unwrap();
        let last = trace.records.last().unwrap();
        println!(
            "{label:15} J_T: {:.4e} -> {:.4e} | n={:4} (fwd {:4} bwd {:4}) | iters {:4} | status {:?} | reach(stop) n={:?} | {:?}",
            first.j_terminal,
            last.j_terminal,
            last.n_total(),
            last.n_forward,
            last.n_backward,
            trace.records.len(),
            trace.status,
            trace.equations_to_reach(stop),
            t0.elapsed()
        );
    }
}
