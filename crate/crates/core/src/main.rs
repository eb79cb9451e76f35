use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use multiharmonic::runner::{format_checks, run_and_write, verify, Problem, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "multiharmonic", version, about = "Multiharmonic eddy-current solver with guaranteed error majorants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Progress logging and per-mode MINRES trace CSVs.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Time-periodic eddy-current problem.
    Forward,
    /// Optimality system of the optimal control problem.
    Ocp,
    /// Oracle suite with a pass/fail table.
    Verify,
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: &Cli) -> anyhow::Result<Result<(), RunError>> {
    let mut cfg = match load_config(cli) {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Verify => {
            let checks = match verify(&cfg) {
                Ok(c) => c,
                Err(e) => return Ok(Err(e)),
            };
            print!("{}", format_checks(&checks));
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            if failed.iter().any(|n| n.starts_with("guaranteed bound")) {
                return Ok(Err(RunError::Bound(failed.join("; "))));
            }
            if !failed.is_empty() {
                return Ok(Err(RunError::Solver(format!("verification checks failed: {}", failed.join("; ")))));
            }
            Ok(Ok(()))
        }
        Command::Forward | Command::Ocp => {
            cfg.problem = if matches!(cli.command, Command::Forward) { Problem::Forward } else { Problem::Ocp };
            let res = run_and_write(&cfg, &out, cli.verbose);
            if res.is_ok() {
                println!("wrote results to {}", out.display());
            }
            Ok(res.map(|_| ()))
        }
    }
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match run(&cli)? {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(e.exit_code() as u8))
        }
    }
}
