use acouwave::config::RunConfig;
use acouwave::scenarios::{run_scenario, Overrides, ScenarioKind};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "acouwave",
    version,
    about = "Spectral laboratory for a damped pressure-velocity system of nonlinear acoustics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for summary.json and the CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the randomized constant estimation.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the per-axis mode cutoff (applied on every axis).
    #[arg(long)]
    modes: Option<usize>,
    /// Override the number of time steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the nonlinear system and record norm time series.
    Solve(CommonArgs),
    /// Temporal and spatial self-convergence against an exact mode solution.
    Converge(CommonArgs),
    /// Long-horizon decay certificate for the unforced system.
    Decay(CommonArgs),
    /// Generator decomposition, resolvent sweep and propagator decay.
    Semigroup(CommonArgs),
    /// Small-amplitude comparison against the scalar second-order model.
    Kuznetsov(CommonArgs),
    /// Estimate and cross-check the constants ledger.
    Ledger(CommonArgs),
    /// Finite-difference companion ladder against the spectral solution.
    Oracle(CommonArgs),
}

impl Command {
    fn split(self) -> (ScenarioKind, CommonArgs) {
        match self {
            Command::Solve(a) => (ScenarioKind::Solve, a),
            Command::Converge(a) => (ScenarioKind::Converge, a),
            Command::Decay(a) => (ScenarioKind::Decay, a),
            Command::Semigroup(a) => (ScenarioKind::Semigroup, a),
            Command::Kuznetsov(a) => (ScenarioKind::Kuznetsov, a),
            Command::Ledger(a) => (ScenarioKind::Ledger, a),
            Command::Oracle(a) => (ScenarioKind::Oracle, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    let overrides = Overrides {
        seed: args.seed,
        modes: args.modes,
        steps: args.steps,
    };
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario(kind, &config, &args.out, &overrides) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                let tag = if v.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", v.name, v.detail);
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("summary: {}", outcome.summary_path.display());
            if outcome.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
