#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod error;
mod experiment;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

/// Batch driver for D-AMP compressed-sensing experiments.
///
/// Exit codes: 0 success, 1 i/o, 2 validation, 3 numerical failure, 4 budget.
#[derive(Parser, Debug)]
#[command(name = "damp", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a test signal.
    GenSignal(commands::GenSignal),
    /// Generate a Gaussian sensing matrix (binary format).
    GenMatrix(commands::GenMatrix),
    /// y = A x + σ_w w.
    Measure(commands::Measure),
    /// Run IST, AMP, D-IT or D-AMP and write a JSON-lines trace.
    Recover(commands::Recover),
    /// State-evolution prediction for a denoiser and signal.
    Se(commands::Se),
    /// Diagnostics on stored traces and artifact directories.
    Diag {
        #[command(subcommand)]
        cmd: Diag,
    },
    /// Run an experiment spec into an artifact directory.
    Run(SpecArgs),
    /// Run the δ × σ_w × replicate grid of a spec and aggregate it.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        /// Maximum recoveries; overrides the spec's budget.
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum Diag {
    /// QQ pairs and normality statistics of the effective noise at one iteration.
    Qq(commands::Qq),
    /// Recompute the manifest hashes of an artifact directory.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct SpecArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Artifact directory; default out/<name>_<command>.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::GenSignal(a) => commands::gen_signal_cmd(&a),
        Cmd::GenMatrix(a) => commands::gen_matrix_cmd(&a),
        Cmd::Measure(a) => commands::measure_cmd(&a),
        Cmd::Recover(a) => commands::recover_cmd(&a),
        Cmd::Se(a) => commands::se_cmd(&a),
        Cmd::Diag { cmd: Diag::Qq(a) } => commands::qq_cmd(&a),
        Cmd::Diag { cmd: Diag::Verify { dir } } => {
            let n = artifacts::verify(&dir)?;
            println!("{}: {n} entries verified", dir.display());
            Ok(())
        }
        Cmd::Run(a) => {
            let l = spec::load(&a.spec)?;
            let out = a.out.unwrap_or_else(|| experiment::default_out(&l, "run"));
            experiment::cmd_run(&l, &out)?;
            println!("{}", out.display());
            Ok(())
        }
        Cmd::Sweep { spec: a, budget } => {
            let l = spec::load(&a.spec)?;
            let out = a.out.unwrap_or_else(|| experiment::default_out(&l, "sweep"));
            experiment::cmd_sweep(&l, &out, budget)?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
