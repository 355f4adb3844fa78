//! `bhc`: simulate scans, reconstruct them and run the blind beam-hardening
//! correction from the command line.

mod args;
mod commands;

use std::process::ExitCode;

use bhc_core::Error;
use clap::{Parser, Subcommand};

use commands::{CorrectCmd, LutCmd, MetricsCmd, PhantomCmd, ReconstructCmd, SimulateCmd};

/// Beam-hardening simulation and blind correction for parallel-beam CT.
///
/// Exit status: 0 on success, 2 for invalid arguments, configuration or
/// files, 3 when a numeric stage fails. BHC_THREADS sets the worker count.
#[derive(Debug, Parser)]
#[command(name = "bhc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize a phantom description into a label volume
    Phantom(PhantomCmd),
    /// Project a label volume into an attenuation sinogram
    Simulate(SimulateCmd),
    /// Filtered backprojection of a sinogram
    Reconstruct(ReconstructCmd),
    /// Build the polychromatic attenuation table for a scanner setting
    Lut(LutCmd),
    /// Run the blind beam-hardening correction on a measured sinogram
    Correct(CorrectCmd),
    /// Cupping, streak, reference RMS and plateau metrics of an image
    Metrics(MetricsCmd),
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BHC_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("BHC_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("BHC_THREADS must be a positive integer, got `0`".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error [startup]: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let result = match &cli.command {
        Command::Phantom(c) => commands::phantom(c),
        Command::Simulate(c) => commands::simulate(c),
        Command::Reconstruct(c) => commands::reconstruct(c),
        Command::Lut(c) => commands::lut(c),
        Command::Correct(c) => commands::correct(c),
        Command::Metrics(c) => commands::metrics(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // pipeline failures name their own stage; anything else is tagged with the subcommand
            let stage = match &e {
                Error::Stage { stage, .. } => stage.to_string(),
                _ => cli.command.name().to_string(),
            };
            eprintln!("error [{stage}]: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG })
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Simulate(_) => "simulate",
            Command::Reconstruct(_) => "reconstruct",
            Command::Lut(_) => "lut",
            Command::Correct(_) => "correct",
            Command::Metrics(_) => "metrics",
        }
    }
}
