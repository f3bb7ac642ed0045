use std::path::PathBuf;
use std::process::ExitCode;

use ballcrit_cli::{run_with_jobs, CliError, RunConfig};
use clap::Parser;

/// Critical points of semilinear grid problems on a ball.
#[derive(Parser)]
#[command(name = "ballcrit", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long, env = "BALLCRIT_CONFIG")]
    config: PathBuf,
    /// eigen, lambda-star, solve, pipeline, sweep, certify, check-hypotheses or refine.
    #[arg(long, default_value = "pipeline")]
    command: String,
    /// Overrides solver.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = RunConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(seed) = args.seed {
            cfg.solver.seed = seed;
        }
        run_with_jobs(&args.command, &cfg, args.jobs)
    });
    match result {
        Ok(outcome) => {
            if !args.quiet {
                print!("{}", outcome.summary);
            }
            if outcome.exit_code != 0 {
                eprintln!("ballcrit: finished with exit code {} (see report)", outcome.exit_code);
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("ballcrit: {e}");
            exit(&e)
        }
    }
}

fn exit(e: &CliError) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
