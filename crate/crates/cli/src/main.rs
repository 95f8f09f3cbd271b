//! Command line front end for the risk-sensitive stochastic game solver.
//!
//! Four subcommands cover the workflow: `validate` checks the standing
//! assumptions on a model file, `solve` runs the backward solver and
//! exports reloadable value/policy tables, `verify` replays a solved
//! feedback against unilateral deviations and issues a statistical Nash
//! certificate, and `diagnose` runs focused numerical suites
//! (change-of-measure weights, moment probes, state densities).
//!
//! Exit codes: 0 success, 1 usage/config error, 2 assumption failure,
//! 3 no pointwise equilibrium, 4 verification verdict FAIL.

mod commands;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rsg_core::{Error, Result};

use commands::{DiagnoseArgs, SolveArgs, ValidateArgs, VerifyArgs};

#[derive(Parser, Debug)]
#[command(
    name = "rsg",
    version,
    about = "Solve and verify risk-sensitive stochastic differential games",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for the data-parallel loops (0 = runtime default).
    /// The RSG_WORKERS environment variable overrides this flag. Results
    /// are bit-identical for every worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the standing assumptions (A1-A4) on a model configuration
    Validate(ValidateArgs),
    /// Solve the coupled system and export value/policy tables
    Solve(SolveArgs),
    /// Verify a solved feedback with paired deviation tests
    Verify(VerifyArgs),
    /// Run a numerical diagnostic suite and write CSV reports
    Diagnose(DiagnoseArgs),
}

/// The flag value, unless `RSG_WORKERS` is set, which wins.
fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("RSG_WORKERS") {
        Ok(text) => {
            let value = text.trim().parse::<usize>().map_err(|_| Error::InvalidParameter {
                name: "RSG_WORKERS",
                detail: format!("expected a nonnegative integer, got `{text}`"),
            })?;
            Ok(Some(value))
        }
        Err(_) => Ok(flag),
    }
}

/// Sizes the global worker pool once, before any parallel region runs.
/// Zero keeps the runtime default. Without the `parallel` feature the
/// loops are sequential and the setting has no effect (outputs are
/// identical either way).
#[cfg(feature = "parallel")]
fn init_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        if let Err(err) =
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()
        {
            eprintln!("warning: worker pool already initialized: {err}");
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn init_workers(_workers: Option<usize>) {}

/// Maps a library error to the documented process exit code.
fn exit_code_for(err: &Error) -> u8 {
    if err.is_assumption_failure() {
        return 2;
    }
    match err {
        Error::NoEquilibrium { .. } => 3,
        _ => 1,
    }
}

fn run(command: &Command, workers: Option<usize>) -> Result<i32> {
    match command {
        Command::Validate(args) => commands::cmd_validate(args, workers),
        Command::Solve(args) => commands::cmd_solve(args, workers),
        Command::Verify(args) => commands::cmd_verify(args, workers),
        Command::Diagnose(args) => commands::cmd_diagnose(args, workers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_mapping() {
        assert_eq!(
            exit_code_for(&Error::Config("bad".into())),
            1,
            "config problems are usage errors"
        );
        assert_eq!(
            exit_code_for(&Error::Assumption { assumption: "A2", detail: "x".into() }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::SingularDiffusion { t: 0.0, x: vec![0.0] }),
            2,
            "a singular diffusion is an assumption failure"
        );
        assert_eq!(
            exit_code_for(&Error::NoEquilibrium {
                t: 0.5,
                x: vec![0.0],
                p: vec![1.0],
                q: vec![1.0],
            }),
            3
        );
        assert_eq!(
            exit_code_for(&Error::InvalidParameter { name: "paths", detail: "zero".into() }),
            1
        );
    }

    #[test]
    fn workers_env_var_wins_over_flag() {
        // Runs single-threaded relative to the env var contract: the test
        // only exercises the pure resolution logic, not the pool.
        std::env::remove_var("RSG_WORKERS");
        assert_eq!(resolve_workers(Some(3)).unwrap(), Some(3));
        assert_eq!(resolve_workers(None).unwrap(), None);
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1 (clap's default would be 2, which is
    // reserved for assumption failures); --help and --version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let workers = match resolve_workers(cli.workers) {
        Ok(w) => w,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    init_workers(workers);

    match run(&cli.command, workers) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
