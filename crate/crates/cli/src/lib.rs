//! Command-line front end for the MAMSAP design engine.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::commands::CommandOutput;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mamsap", version, about = "Multi-arm multi-stage designs with all pairwise comparisons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve boundaries and group size, then report the design.
    Design(Args),
    /// Report the operating characteristics of an existing design.
    Evaluate(Args),
    /// Strong-control certificate for a design or a configured sweep.
    StrongCheck(Args),
    /// Monte Carlo operating characteristics against the analytic values.
    Simulate(Args),
    /// Comparator designs side by side.
    Compare(Args),
    /// Boundary lines as CSV.
    PlotData(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A design.json written by `design`.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target standard error of reported probabilities.
    #[arg(long)]
    pub precision: Option<f64>,
    /// Replications per configuration for `simulate`.
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl Args {
    fn config(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::Config("--config is required".into()))?;
        let mut config = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            config.execution.seed = seed;
        }
        if let Some(p) = self.precision {
            config.execution.precision = p;
        }
        if let Some(r) = self.reps {
            config.execution.replications = r;
        }
        config.validate()?;
        config.apply_threads();
        Ok(config)
    }

    fn design(&self) -> Result<&Path, CliError> {
        self.design
            .as_deref()
            .ok_or_else(|| CliError::Config("--design is required".into()))
    }
}

pub fn run(command: &Command) -> Result<CommandOutput, CliError> {
    match command {
        Command::Design(a) => commands::cmd_design(&a.config()?, &a.out),
        Command::Evaluate(a) => commands::cmd_evaluate(&a.config()?, a.design()?, &a.out),
        Command::StrongCheck(a) => commands::cmd_strong_check(&a.config()?, a.design.as_deref(), &a.out),
        Command::Simulate(a) => commands::cmd_simulate(&a.config()?, a.design()?, &a.out),
        Command::Compare(a) => commands::cmd_compare(&a.config()?, a.design.as_deref(), &a.out),
        Command::PlotData(a) => commands::cmd_plot_data(a.design()?, &a.out),
    }
}
