//! `nlpi`: eigenfunctions of black-box image operators, driven by config files.

mod commands;
mod config;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nlpi", version, about = "Nonlinear power iterations on image operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Power iteration from an input image
    Eigen { config: PathBuf },
    /// Power iteration orthogonal to known eigenfunctions
    Deflate { config: PathBuf },
    /// Eigenpair measures for a single image
    Diagnose { config: PathBuf },
    /// Per-pixel trajectories under repeated application
    Decay { config: PathBuf },
    /// Degrade an eigenfunction and iterate back; PSNR gain of one application
    Robustness { config: PathBuf },
    /// Hide a binary message in an eigenfunction
    StegEncode { config: PathBuf },
    /// Recover a hidden message by power iteration
    StegDecode { config: PathBuf },
    /// Fit a patch GMM prior by EM
    FitGmm { config: PathBuf },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (path, f): (_, fn(&RunConfig) -> anyhow::Result<()>) = match cli.command {
        Command::Eigen { config } => (config, commands::eigen),
        Command::Deflate { config } => (config, commands::deflate),
        Command::Diagnose { config } => (config, commands::diagnose),
        Command::Decay { config } => (config, commands::decay),
        Command::Robustness { config } => (config, commands::robustness_cmd),
        Command::StegEncode { config } => (config, commands::steg_encode_cmd),
        Command::StegDecode { config } => (config, commands::steg_decode_cmd),
        Command::FitGmm { config } => (config, commands::fit_gmm),
    };
    f(&RunConfig::load(&path)?)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
