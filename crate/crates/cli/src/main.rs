use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cgl_cli::config::ExperimentKind;
use cgl_cli::run::{execute, Invocation};

/// Monte Carlo laboratory for the white-forced complex Ginzburg–Landau
/// equation on a truncated line: free and coupled ensembles, likelihood
/// ledgers, tail frequencies, and law-distance decay fits.
#[derive(Parser)]
#[command(name = "cgl", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); the reference defaults apply when
    /// omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the RNG seed from the configuration
    #[arg(long, env = "CGL_SEED", value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: one per core)
    #[arg(long, env = "CGL_WORKERS", value_name = "N")]
    workers: Option<usize>,

    /// Parent directory for run outputs
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a noisy ensemble and record one trajectory's series
    Simulate(Common),
    /// Run stopped coupled pairs and their likelihood ledger
    Couple(Common),
    /// Fit the decay rate of the distance between two initial laws
    Mixing(Common),
    /// Measure energy-supremum and stopping-time tail frequencies
    Tails(Common),
    /// Tabulate the truncation tail constant on band-limited samples
    Poincare(Common),
    /// Run the numerical self-checks and validate the configuration
    Validate(Common),
}

fn main() {
    let cli = Cli::parse();
    let (kind, common) = match cli.cmd {
        Cmd::Simulate(c) => (ExperimentKind::Simulate, c),
        Cmd::Couple(c) => (ExperimentKind::Couple, c),
        Cmd::Mixing(c) => (ExperimentKind::Mixing, c),
        Cmd::Tails(c) => (ExperimentKind::Tails, c),
        Cmd::Poincare(c) => (ExperimentKind::Poincare, c),
        Cmd::Validate(c) => (ExperimentKind::Validate, c),
    };
    let inv = Invocation {
        kind,
        config_path: common.config,
        seed: common.seed,
        workers: common.workers,
        out_parent: common.out,
    };
    match execute(&inv) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprint!("{}", e.report());
            std::process::exit(e.exit_code());
        }
    }
}
