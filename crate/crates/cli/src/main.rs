//! `projsynth`: command-line front end for the projection synthesis pipeline.
//!
//! Exit codes are a stable contract: 0 on success, 1 when a verification
//! command (`selftest`) finds a failing check, 2 on usage, configuration, or
//! I/O errors. All commands are deterministic: the same inputs produce
//! byte-identical outputs regardless of thread count.

mod commands;
mod config;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "projsynth",
    version,
    about = "Cone-beam X-ray projection synthesis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize an ellipsoid phantom into a volume file.
    Phantom(commands::phantom::Args),
    /// Render X-ray projections of a volume at the given angles.
    Project(commands::project::Args),
    /// Run the synthesis pipeline described by a JSON run config.
    Synthesize(commands::synthesize::Args),
    /// Compare two projections and report MAE / NRMSE / PSNR / SSIM.
    Metrics(commands::metrics::Args),
    /// Run the built-in numerical verification checks.
    Selftest(commands::selftest::Args),
    /// Time the pipeline stages of a run config.
    Bench(commands::bench::Args),
}

/// Restore the default SIGPIPE disposition so that piping output into a
/// pager or `head` ends the process quietly instead of panicking on a
/// closed stdout.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Phantom(args) => commands::phantom::run(&args).map(|()| ExitCode::SUCCESS),
        Command::Project(args) => commands::project::run(&args).map(|()| ExitCode::SUCCESS),
        Command::Synthesize(args) => commands::synthesize::run(&args).map(|()| ExitCode::SUCCESS),
        Command::Metrics(args) => commands::metrics::run(&args).map(|()| ExitCode::SUCCESS),
        Command::Selftest(args) => commands::selftest::run(&args),
        Command::Bench(args) => commands::bench::run(&args).map(|()| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
