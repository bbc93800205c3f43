//! Command-line pipeline for estimating plant species richness from
//! hyperspectral reflectance spectra.
//!
//! Subcommands:
//! - `synth`: generate a synthetic benchmark dataset from a scene config;
//! - `preprocess`: cloud filtering, Gaussian resampling to a target grid,
//!   band removal and mean normalization;
//! - `evaluate`: repeated two-fold cross validation over dimensionality
//!   reduction x regression method pairs, with grid-searched
//!   hyperparameters;
//! - `report`: re-render the comparison table from a report CSV.
//!
//! All randomness flows from configured seeds; identical configs produce
//! byte-identical outputs. `SPECRICH_THREADS` sets the worker count for
//! evaluation and nothing else.

mod commands;
mod config;
mod provenance;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "specrich",
    version,
    about = "Plant species richness estimation from hyperspectral spectra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scene configuration.
    Synth(commands::synth::SynthArgs),
    /// Filter, resample, trim and normalize input spectra.
    Preprocess(commands::preprocess::PreprocessArgs),
    /// Cross-validate method pairs and write comparison reports.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Re-render the comparison table from a report CSV.
    Report(commands::report::ReportArgs),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Preprocess(args) => commands::preprocess::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Report(args) => commands::report::run(args),
    }
}
