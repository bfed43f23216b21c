mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcsplan::evaluation::{self, McConfig};
use rcsplan::scenarios::{Scenario, ScenarioConfig};
use rcsplan::solver::{solve_desensitized, CostMode, NlpSolution, TranscriptionOptions};
use rcsplan::{Error, RelevanceKind};

const DEFAULT_ALPHAS: [f64; 4] = [0.0, 0.1, 0.33, 1.0];

#[derive(Parser, Debug)]
#[command(name = "rcsplan", version, about = "Sensitivity-regularized trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Solve one problem and write trajectory.csv and solution.json.
    Solve,
    /// Solve at each alpha, estimate collision probabilities, write tradeoff.csv.
    Sweep,
    /// Solve once and estimate the plan's collision probability.
    Montecarlo,
    /// Compare propagated sensitivities with independent oracles.
    SensitivityCheck,
}

#[derive(Args, Debug)]
struct Flags {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Penalty weight(s), comma separated. Single-run commands take one value.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Relevance function kind.
    #[arg(long, global = true, value_parser = parse_relevance)]
    relevance: Option<RelevanceKind>,
    #[arg(long, global = true)]
    relevance_scale: Option<f64>,
    /// Sensitivity penalty form.
    #[arg(long, global = true, value_parser = parse_cost_mode)]
    cost_mode: Option<CostMode>,
    /// Constraint exponent (planar scenarios).
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Super-Gaussian exponent (car-vs-train).
    #[arg(long, global = true)]
    gamma: Option<u32>,
    /// Collocation nodes.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count.
    #[arg(long, global = true, default_value_t = 1000)]
    samples: usize,
    /// Standard deviation of the speed perturbations.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Repeat for more solver output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_relevance(s: &str) -> Result<RelevanceKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cost_mode(s: &str) -> Result<CostMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Config(String),
    NotConverged(String),
    Check(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            Error::AllSeedsFailed { .. } => Failure::NotConverged(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Everything a command needs after flags and file are merged.
struct Run {
    config: ScenarioConfig,
    scenario: Scenario,
    options: TranscriptionOptions,
    alphas: Vec<f64>,
    mc: McConfig,
    out: PathBuf,
}

impl Run {
    fn single_alpha(&self) -> Result<f64, Failure> {
        match self.alphas.as_slice() {
            [a] => Ok(*a),
            _ => Err(Failure::Config(format!(
                "this command takes one alpha, got {}",
                self.alphas.len()
            ))),
        }
    }

    fn solve(&self, alpha: f64) -> Result<NlpSolution, Failure> {
        let opts = self.options.clone().with_alpha(alpha)?;
        Ok(solve_desensitized(&self.scenario.problem, &opts, &self.scenario.seeds)?)
    }
}

fn prepare(command: Command, f: &Flags) -> Result<Run, Failure> {
    let path = f
        .scenario
        .as_ref()
        .ok_or_else(|| Failure::Config("--scenario is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ScenarioConfig::from_json(&text).map_err(|e| match Failure::from(e) {
        Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(lambda) = f.lambda {
        config.set_lambda(lambda)?;
    }
    if let Some(gamma) = f.gamma {
        config.set_gamma(gamma)?;
    }
    let scenario = config.build()?;

    let mut options = TranscriptionOptions::default();
    if let Some(n) = f.nodes {
        options.num_nodes = n;
    }
    if let Some(mode) = f.cost_mode {
        options.cost_mode = mode;
    }
    if let Some(spec) = config.relevance() {
        options.relevance = spec;
    }
    if let Some(kind) = f.relevance {
        options.relevance.kind = kind;
    }
    if let Some(scale) = f.relevance_scale {
        options.relevance.scale = scale;
    }
    options.verbosity = f.verbose;
    options.validate()?;

    let alphas = if !f.alpha.is_empty() {
        f.alpha.clone()
    } else if command == Command::Sweep {
        DEFAULT_ALPHAS.to_vec()
    } else {
        vec![config.alpha().unwrap_or(0.0)]
    };
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Failure::Config(format!("alpha must be finite and >= 0, got {a}")));
    }
    let mc = McConfig {
        num_samples: f.samples,
        perturbation_std: f.sigma.unwrap_or(McConfig::default().perturbation_std),
        rng_seed: f.seed,
        ..McConfig::default()
    };
    mc.validate()?;
    Ok(Run {
        config,
        scenario,
        options,
        alphas,
        mc,
        out: f.out.clone(),
    })
}

fn cmd_solve(run: &Run) -> Result<(), Failure> {
    let alpha = run.single_alpha()?;
    let sol = run.solve(alpha)?;
    let opts = run.options.clone().with_alpha(alpha)?;
    output::write_trajectory(&run.out.join("trajectory.csv"), &run.scenario, &sol.trajectory, &opts)?;
    let summary = output::solution_summary(&run.scenario, &sol, alpha, &opts)?;
    write(&run.out.join("solution.json"), &summary)?;
    println!(
        "{}: alpha {alpha} t_f {:.6} objective {:.6} min clearance {:.4}",
        run.scenario.kind,
        sol.trajectory.final_time,
        sol.objective,
        run.scenario.min_clearance(&sol.trajectory)
    );
    Ok(())
}

fn cmd_sweep(run: &Run) -> Result<(), Failure> {
    let report = evaluation::tradeoff_sweep(&run.config, &run.alphas, &run.mc, &run.options)?;
    write(&run.out.join("tradeoff.csv"), &report.to_csv())?;
    write(&run.out.join("tradeoff.json"), &report.to_json())?;
    let mut failed = Vec::new();
    for row in &report.rows {
        match &row.trajectory {
            Some(traj) => {
                let opts = run.options.clone().with_alpha(row.alpha)?;
                let name = format!("trajectory_alpha_{}.csv", row.alpha);
                output::write_trajectory(&run.out.join(name), &run.scenario, traj, &opts)?;
                println!(
                    "alpha {}: t_f {:.4} p_c {:.4} [{:.4}, {:.4}]",
                    row.alpha,
                    row.t_f.unwrap_or(f64::NAN),
                    row.p_c.unwrap_or(f64::NAN),
                    row.ci_low.unwrap_or(f64::NAN),
                    row.ci_high.unwrap_or(f64::NAN)
                );
            }
            None => {
                println!("alpha {}: failed", row.alpha);
                failed.push(row.alpha);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("no converged solution for alpha {failed:?}")))
    }
}

fn cmd_montecarlo(run: &Run) -> Result<(), Failure> {
    let alpha = run.single_alpha()?;
    let sol = run.solve(alpha)?;
    let opts = run.options.clone().with_alpha(alpha)?;
    let est = evaluation::collision_probability(&run.scenario.problem, &sol.trajectory, &run.mc)?;
    output::write_trajectory(&run.out.join("trajectory.csv"), &run.scenario, &sol.trajectory, &opts)?;
    let doc = serde_json::json!({
        "scenario": run.scenario.kind.to_string(),
        "alpha": alpha,
        "t_f": sol.trajectory.final_time,
        "seed": run.mc.rng_seed,
        "perturbation_std": run.mc.perturbation_std,
        "estimate": est,
    });
    write(&run.out.join("montecarlo.json"), &pretty(&doc))?;
    println!(
        "alpha {alpha}: t_f {:.4} p_c {:.4} [{:.4}, {:.4}] ({} samples, {} diverged)",
        sol.trajectory.final_time, est.p_c, est.ci_low, est.ci_high, est.n_samples, est.diverged
    );
    Ok(())
}

fn cmd_sensitivity_check(run: &Run) -> Result<(), Failure> {
    let alpha = run.single_alpha()?;
    let sol = run.solve(alpha)?;
    let check = evaluation::sensitivity_check(&run.scenario, &sol.trajectory, 1e-4)?;
    write(&run.out.join("sensitivity_check.json"), &pretty(&serde_json::to_value(&check).unwrap()))?;
    println!(
        "S: max relative error {:.3e} (tolerance {:.0e}); S_g ({}): max error {:.3e} (tolerance {:.0e})",
        check.max_rel_error_s, check.tolerance_s, check.sg_oracle, check.max_error_sg, check.tolerance_sg
    );
    if check.passed {
        Ok(())
    } else {
        Err(Failure::Check("sensitivity errors exceed tolerance".into()))
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let run = prepare(cli.command, &cli.flags)?;
    std::fs::create_dir_all(&run.out)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", run.out.display())))?;
    match cli.command {
        Command::Solve => cmd_solve(&run),
        Command::Sweep => cmd_sweep(&run),
        Command::Montecarlo => cmd_montecarlo(&run),
        Command::SensitivityCheck => cmd_sensitivity_check(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.flags.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::NotConverged(m) => ("not converged", m),
                Failure::Check(m) => ("check failed", m),
                Failure::Runtime(m) => ("error", m),
            };
            eprintln!("rcsplan: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
