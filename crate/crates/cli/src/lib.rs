//! Command-line recipes: trajectory generation, hierarchy inspection,
//! training, rollout and evaluation, all driven by one flat config.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "msgnn", version, about = "Multi-stage GNN surrogate for cavity convection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver over the sweep lists and write trajectories plus a manifest.
    Generate(CommonArgs),
    /// Build the clique hierarchy for the configured mesh and print statistics.
    Hierarchy(CommonArgs),
    /// Train a model on the trajectories under `data`.
    Train(CommonArgs),
    /// Roll a checkpoint forward from a trajectory frame.
    Rollout(CommonArgs),
    /// Compare predictions with the reference trajectory.
    Evaluate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file with `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl CommonArgs {
    /// Defaults, then the config file, then `--set` overrides, then `--seed`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.merge_file(path)?;
        }
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => commands::generate(&a.resolve()?, &a.out),
        Command::Hierarchy(a) => commands::hierarchy(&a.resolve()?, &a.out),
        Command::Train(a) => commands::train_cmd(&a.resolve()?, &a.out),
        Command::Rollout(a) => commands::rollout(&a.resolve()?, &a.out),
        Command::Evaluate(a) => commands::evaluate(&a.resolve()?, &a.out),
    }
}
