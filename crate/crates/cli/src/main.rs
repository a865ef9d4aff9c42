//! `epsafe`: plan for a domain/problem pair and write the plan, a
//! probability report, DOT graphs and a simulator cross-check.
//!
//! Exit status is 0 when a plan reaches `1 - epsilon`, 2 when none does
//! within the node budget, and 1 on bad input.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, ValueEnum};
use serde_json::json;

use epsafe::domain::{ground, parse_domain, parse_problem, GroundDomain};
use epsafe::error::PlanError;
use epsafe::plangraph::to_dot;
use epsafe::planner::{solve, PlanOutcome, PlannerConfig, PlannerKind};
use epsafe::probmodel::{Model, ModelKind};
use epsafe::simulator::{exact_success, plan_network, simulation_report};

/// Largest prior network enumerated exactly for the simulation report.
const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum Emit {
    PlanJson,
    Dot,
    Trace,
    Simulate,
}

#[derive(Debug, Parser)]
#[command(name = "epsafe", version, about = "Probabilistic conditional planner")]
struct Cli {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value = "linear")]
    planner: PlannerKind,
    #[arg(long, default_value = "kbmc")]
    model: ModelKind,
    /// Overrides the problem's epsilon; must lie in [0, 1).
    #[arg(long, value_parser = parse_epsilon)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials for `--emit simulate`.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    node_budget: usize,
    #[arg(long, value_delimiter = ',', default_value = "plan-json")]
    emit: Vec<Emit>,
    /// Where artifacts go.
    #[arg(long, env = "EPSAFE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let e: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&e) {
        Ok(e)
    } else {
        Err(format!("epsilon {e} is outside [0, 1)"))
    }
}

/// A failure that ends the run with status 1.
struct InputError(String);

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn load(cli: &Cli) -> Result<GroundDomain, InputError> {
    let domain = parse_domain(&read(&cli.domain)?).map_err(|e| InputError(format!("{}:{e}", cli.domain.display())))?;
    let problem = parse_problem(&read(&cli.problem)?).map_err(|e| InputError(format!("{}:{e}", cli.problem.display())))?;
    ground(&domain, &problem).map_err(|e| InputError(format!("{}: {e}", cli.domain.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), InputError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn install_trace(dir: &Path) -> Result<(), InputError> {
    let path = dir.join("trace.jsonl");
    let file = File::create(&path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    tracing_subscriber::fmt()
        .json()
        .without_time()
        .with_max_level(tracing::Level::DEBUG)
        .with_writer(Mutex::new(file))
        .init();
    Ok(())
}

fn report(cli: &Cli, g: &GroundDomain, out: &PlanOutcome) -> Result<serde_json::Value, InputError> {
    let model = Model::new(g, cli.model).map_err(|e| InputError(e.to_string()))?;
    let model = model.for_plan(&out.graph).map_err(|e| InputError(e.to_string()))?;
    let branches: Vec<serde_json::Value> = out
        .plan
        .branches
        .iter()
        .map(|b| {
            let p = model.context_mass(&out.graph, &b.context).map_err(|e| InputError(e.to_string()))?;
            Ok(json!({ "context": b.context, "goal": b.goal, "probability": p }))
        })
        .collect::<Result<_, InputError>>()?;
    Ok(json!({
        "status": "solved",
        "planner": cli.planner.to_string(),
        "model": cli.model.to_string(),
        "epsilon": out.bound.epsilon,
        "achievedMass": out.bound.achieved_mass,
        "potentialMass": out.bound.potential_mass,
        "expanded": out.expanded,
        "net": out.plan.net,
        "branches": branches,
    }))
}

fn run(cli: &Cli) -> Result<u8, InputError> {
    fs::create_dir_all(&cli.out_dir).map_err(|e| InputError(format!("{}: {e}", cli.out_dir.display())))?;
    if cli.emit.contains(&Emit::Trace) {
        install_trace(&cli.out_dir)?;
    }
    let g = load(cli)?;
    let config = PlannerConfig {
        model: cli.model,
        epsilon: cli.epsilon,
        node_budget: cli.node_budget,
        ..Default::default()
    };
    let out = match solve(cli.planner, &g, &config) {
        Ok(out) => out,
        Err(PlanError::UnsolvableWithinEpsilon {
            target,
            best_achieved,
            expanded,
        }) => {
            let rep = json!({
                "status": "unsolvable-within-epsilon",
                "planner": cli.planner.to_string(),
                "model": cli.model.to_string(),
                "target": target,
                "bestAchieved": best_achieved,
                "expanded": expanded,
            });
            write(&cli.out_dir, "report.json", &pretty(&rep))?;
            print!("{}", pretty(&rep));
            eprintln!("epsafe: no plan reaches {target:.6}; best achieved {best_achieved:.4}");
            return Ok(2);
        }
        Err(e) => return Err(InputError(e.to_string())),
    };

    let rep = report(cli, &g, &out)?;
    write(&cli.out_dir, "report.json", &pretty(&rep))?;
    if cli.emit.contains(&Emit::PlanJson) {
        write(&cli.out_dir, "plan.json", &(out.plan.to_json() + "\n"))?;
    }
    if cli.emit.contains(&Emit::Dot) {
        write(&cli.out_dir, "plan.dot", &to_dot(&out.graph, &g))?;
        let net = plan_network(&out.plan).map_err(|e| InputError(e.to_string()))?;
        write(&cli.out_dir, "net.dot", &net.to_dot())?;
    }
    if cli.emit.contains(&Emit::Simulate) {
        let net = plan_network(&out.plan).map_err(|e| InputError(e.to_string()))?;
        let exhaustive = net.len() <= EXACT_LIMIT;
        let sim = simulation_report(&out.plan, cli.trials, cli.seed, exhaustive).map_err(|e| InputError(e.to_string()))?;
        let mut sim = serde_json::to_value(&sim).expect("report serializes");
        if exhaustive {
            let ex = exact_success(&out.plan).map_err(|e| InputError(e.to_string()))?;
            sim["exactViolations"] = json!(ex.violations);
        }
        write(&cli.out_dir, "simulation.json", &pretty(&sim))?;
    }
    print!("{}", pretty(&rep));
    Ok(0)
}

fn main() -> ExitCode {
    // usage errors are input errors; clap's own status 2 means unsolvable here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(InputError(msg)) => {
            eprintln!("epsafe: {msg}");
            ExitCode::from(1)
        }
    }
}
