use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_lorentz::experiment::{execute, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "levy-lorentz", version, about = "Random walks between Levy-spaced targets and their scaling limit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trajectory ensembles and rescaled samples
    Simulate(Args),
    /// Ensembles of Delta and of the composite limit
    LimitSample(Args),
    /// Exact identities and invariant suites
    Verify(Args),
    /// Fits and KS tests from stored samples
    Analyze(Args),
    /// Fit the scale of the limit stable law
    Calibrate(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Flat TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override `master_seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Override `workers`
    #[arg(long)]
    workers: Option<usize>,
    /// Override `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 if any check fails
    #[arg(long = "assert")]
    assert_checks: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::LimitSample(a) => (Command::LimitSample, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Analyze(a) => (Command::Analyze, a),
        Cmd::Calibrate(a) => (Command::Calibrate, a),
    };
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let result = match execute(command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for c in &result.manifest.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for s in &result.manifest.skipped {
        println!("SKIP {s}");
    }
    println!("outputs written to {}", cfg.output_dir.display());
    if args.assert_checks && !result.all_checks_passed() {
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
