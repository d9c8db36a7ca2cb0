use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nchns_core::commands::{self, Command, FailureRecord};
use nchns_core::Error;

/// Forward, tangent, adjoint and optimal-control runs for the nonlocal
/// Cahn-Hilliard/Navier-Stokes system.
#[derive(Parser)]
#[command(name = "nchns", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forward run: trajectory checkpoint and diagnostics CSV
    Simulate(Args),
    /// Remainder test of the linearized state equations
    TangentCheck(Args),
    /// Remainder test of the reduced gradient and the tangent/adjoint gap
    GradientCheck(Args),
    /// Projected gradient descent on the tracking problem
    Optimize(Args),
    /// Hypothesis checks on potential, kernel, viscosity and time step
    Validate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// output directory, overriding `output.dir`
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// seed for randomized directions, overriding `seed`
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::TangentCheck(a) => (Command::TangentCheck, a),
        Cmd::GradientCheck(a) => (Command::GradientCheck, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Validate(a) => (Command::Validate, a),
    };
    let fail = |e: Error| {
        eprintln!("{}", FailureRecord::from_error(cmd, &e).to_json_line());
        let code = match e {
            Error::Config { .. } => EXIT_CONFIG,
            _ => EXIT_CHECK_FAILED,
        };
        ExitCode::from(code)
    };
    if let Err(e) = commands::thread_cap() {
        return fail(e);
    }
    let cfg = match commands::load_config(&args.config, args.out.as_deref(), args.seed) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let outcome = match commands::run(cmd, &cfg) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    for c in &outcome.checks {
        println!(
            "{} {}: {:e} (against {:e})",
            if c.passed { "ok  " } else { "FAIL" },
            c.check,
            c.value,
            c.threshold
        );
    }
    println!("artifacts in {}", cfg.output.dir.display());
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        for f in outcome.failures() {
            eprintln!("{}", f.to_json_line());
        }
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
