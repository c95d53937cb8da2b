//! Library behind the `orf` binary.
//!
//! Each subcommand reads a TOML run configuration, runs one estimation task
//! on a dedicated thread pool and writes its artifacts together with a
//! manifest to the output directory.

pub mod commands;
pub mod config;
mod output;
mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "orf", version, about = "Heterogeneous treatment effects with orthogonal random forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the forest pair and write `model.json`.
    Fit(CommonArgs),
    /// Point estimates at the test points.
    Effects(CommonArgs),
    /// Point estimates with bootstrap intervals.
    Bootstrap(CommonArgs),
    /// Cross-fitted partialling-out estimate of a constant effect.
    Dml(CommonArgs),
    /// Cross-fitted instrumental-variable estimate of a constant effect.
    Dmliv(CommonArgs),
    /// Revenue-maximizing price from per-day effects.
    Policy(CommonArgs),
    /// Estimator comparison on the synthetic scenarios.
    Benchmark(CommonArgs),
    /// Effect curve as CSV and SVG.
    PlotData(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration in TOML.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a configuration key, for example `--set forest.trees=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory, replacing `output` from the configuration.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Accept test points outside the observed feature range.
    #[arg(long)]
    pub extrapolate: bool,
    /// Model written by `orf fit`, used instead of refitting.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Worker threads, replacing `threads` from the configuration.
    #[arg(short = 'j', long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Effects(_) => "effects",
            Command::Bootstrap(_) => "bootstrap",
            Command::Dml(_) => "dml",
            Command::Dmliv(_) => "dmliv",
            Command::Policy(_) => "policy",
            Command::Benchmark(_) => "benchmark",
            Command::PlotData(_) => "plot-data",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Fit(a)
            | Command::Effects(a)
            | Command::Bootstrap(a)
            | Command::Dml(a)
            | Command::Dmliv(a)
            | Command::Policy(a)
            | Command::Benchmark(a)
            | Command::PlotData(a) => a,
        }
    }
}

pub use commands::run;
