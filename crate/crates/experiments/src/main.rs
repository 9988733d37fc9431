use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roughflow_experiments::commands;
use roughflow_experiments::{CliError, CliResult, ScenarioConfig};

#[derive(Parser)]
#[command(name = "roughflow", version, about = "Flows of rough ODEs with drift: solve, tail, small-noise and bound experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of seeds / replicates (overrides the config's `seeds`).
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the flow for every seed and initial condition.
    Solve(Common),
    /// Fit the tail of the sup-norm over Gaussian drivers.
    Tails(Common),
    /// Small-noise scaling of deviation probabilities.
    Ldp(Common),
    /// Growth-bound sweeps.
    Bounds(Common),
    /// Lift a polyline points CSV to a rough-path CSV.
    Lift {
        #[arg(long)]
        input: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_scenario(c: &Common, f: impl FnOnce(&roughflow_experiments::Scenario, &Path, usize) -> CliResult<String> + Send) -> CliResult<String> {
    let cfg = ScenarioConfig::load(&c.config)?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let seeds = c.seeds.unwrap_or(cfg.seeds);
    let scenario = cfg.build()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = c.workers {
        if k == 0 {
            return Err(CliError::Config("workers: must be positive".into()));
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("workers: {e}")))?;
    pool.install(|| f(&scenario, &out, seeds))
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Solve(c) => run_scenario(&c, |s, out, seeds| {
            let r = commands::solve(s, out, seeds)?;
            Ok(format!("solve: {} runs, {} failed, output in {}", r.runs, r.failed, out.display()))
        }),
        Command::Tails(c) => run_scenario(&c, |s, out, seeds| {
            let mut lines = Vec::new();
            for r in commands::tails(s, out, seeds)? {
                let shape = match (r.fit.deterministic, r.fit.shape) {
                    (true, _) => "deterministic".to_string(),
                    (false, Some(v)) => format!("shape {v:.3} (need >= {:.3})", r.threshold),
                    (false, None) => "no fit".to_string(),
                };
                let verdict = if r.passed { "ok" } else { "FAIL" };
                lines.push(format!("tails xi[{}]: {shape} over {} replicates: {verdict}", r.xi_index, r.replicates));
            }
            Ok(lines.join("\n"))
        }),
        Command::Ldp(c) => run_scenario(&c, |s, out, seeds| {
            let mut lines = Vec::new();
            for r in commands::ldp(s, out, seeds)? {
                for w in &r.warnings {
                    eprintln!("warning: xi[{}]: {w}", r.xi_index);
                }
                let spread = r.spread.map_or("n/a".to_string(), |v| format!("{v:.3}"));
                let verdict = if r.passed { "ok" } else { "FAIL" };
                lines.push(format!("ldp xi[{}]: spread {spread}: {verdict}", r.xi_index));
            }
            Ok(lines.join("\n"))
        }),
        Command::Bounds(c) => run_scenario(&c, |s, out, seeds| {
            let r = commands::bounds(s, out, seeds)?;
            let mut lines: Vec<String> = r
                .fits
                .iter()
                .map(|f| {
                    format!(
                        "bounds {:?} vs {:?}: slope {:.3} [{:.3}, {:.3}]: {}",
                        f.quantity,
                        f.variable,
                        f.slope,
                        f.slope_ci[0],
                        f.slope_ci[1],
                        if f.passed { "ok" } else { "FAIL" }
                    )
                })
                .collect();
            lines.extend(r.skipped.iter().map(|s| format!("skipped: {s}")));
            Ok(lines.join("\n"))
        }),
        Command::Lift { input, out } => {
            let x = commands::lift(&input, &out)?;
            Ok(format!("lift: {} points of dimension {} -> {}", x.len(), x.dim(), out.display()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
