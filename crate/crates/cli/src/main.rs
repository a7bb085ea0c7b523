mod args;
mod checks;
mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cournot_core::CoreError;

use args::{Cli, Command};
use commands::Outcome;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Solver failures map to 3 alongside non-convergence; bad input maps to 2.
fn error_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::PivotFloor { .. }
                | CoreError::Singular
                | CoreError::IterationCap { .. }
                | CoreError::Subproblem { .. }
                | CoreError::EmptySolutionSet => EXIT_NOT_CONVERGED,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

fn absolute(path: &mut PathBuf) {
    if let Ok(p) = std::path::absolute(&*path) {
        *path = p;
    }
}

/// Input paths are stored absolute so a manifest replays from any directory.
fn resolve_paths(command: &mut Command) {
    match command {
        Command::Gen(a) => absolute(&mut a.out),
        Command::Solve(a) => {
            absolute(&mut a.out);
            a.instance.iter_mut().for_each(absolute);
            a.scenarios.iter_mut().for_each(absolute);
        }
        Command::Sweep(a) => absolute(&mut a.out),
        Command::Check(a) => {
            absolute(&mut a.out);
            a.scenarios.iter_mut().for_each(absolute);
        }
        Command::Replay(_) => {}
    }
}

fn set_threads(n: usize) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(mut command: Command) -> anyhow::Result<Outcome> {
    if let Command::Replay(r) = &command {
        command = commands::replay(&r.manifest, r.out.as_ref())?;
    }
    resolve_paths(&mut command);
    match &command {
        Command::Gen(a) => commands::gen(a, &command),
        Command::Solve(a) => {
            set_threads(a.solver.threads)?;
            commands::solve(a, &command)
        }
        Command::Sweep(a) => {
            set_threads(a.solver.threads)?;
            commands::sweep(a, &command)
        }
        Command::Check(a) => checks::check(a, &command),
        Command::Replay(_) => unreachable!("replay resolved above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Ok(Outcome::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(error_code(&err))
        }
    }
}
