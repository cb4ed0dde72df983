//! Flat `key = value` run configuration.
//!
//! One file covers the solver, model and training settings plus the sweep
//! lists and file locations used by the subcommands. Lines starting with
//! `#` are comments. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use msgnn_core::model::ModelConfig;
use msgnn_core::solver::SolverConfig;
use msgnn_core::train::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Model initialisation and data shuffling.
    pub seed: u64,
    pub sweep_aspect_ratios: Vec<u32>,
    pub sweep_t_hot: Vec<f64>,
    /// Initial-perturbation seeds, one trajectory each.
    pub sweep_seeds: Vec<u64>,
    /// Directory holding a generated manifest, or a single trajectory file.
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub trajectory: PathBuf,
    pub predictions: PathBuf,
    pub rollout_start: usize,
    pub rollout_horizon: usize,
    pub profile_y: f64,
    /// Rollout steps that get an error-map image.
    pub map_steps: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
            sweep_aspect_ratios: vec![1],
            sweep_t_hot: vec![SolverConfig::default().t_hot],
            sweep_seeds: vec![0],
            data: PathBuf::from("data"),
            checkpoint: PathBuf::from("model.ckpt"),
            trajectory: PathBuf::new(),
            predictions: PathBuf::from("predictions.cmgn"),
            rollout_start: 0,
            rollout_horizon: 10,
            profile_y: 0.5,
            map_steps: Vec::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| CliError::Config(format!("bad value '{value}' for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one setting. Solver, model and training keys are forwarded
    /// to their sections.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "sweep_aspect_ratios" => self.sweep_aspect_ratios = parse_list(key, value)?,
            "sweep_t_hot" => self.sweep_t_hot = parse_list(key, value)?,
            "sweep_seeds" => self.sweep_seeds = parse_list(key, value)?,
            "data" => self.data = PathBuf::from(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "trajectory" => self.trajectory = PathBuf::from(value),
            "predictions" => self.predictions = PathBuf::from(value),
            "rollout_start" => self.rollout_start = parse(key, value)?,
            "rollout_horizon" => self.rollout_horizon = parse(key, value)?,
            "profile_y" => self.profile_y = parse(key, value)?,
            "map_steps" => self.map_steps = parse_list(key, value)?,
            _ => {
                if !(self.solver.set(key, value)? || self.model.set(key, value)? || self.train.set(key, value)?) {
                    return Err(CliError::Config(format!("unknown key '{key}'")));
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` (or `key = value`) assignments line by line.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(k, v).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{origin}:{}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.merge_text(&text, &path.display().to_string())
    }

    /// Applies a `--set KEY=VALUE` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(0.0..=self.solver.height).contains(&self.profile_y) {
            return Err(CliError::Config(format!("profile_y {} is outside the cavity", self.profile_y)));
        }
        Ok(())
    }

    /// Every setting, one `key = value` per line, grouped by section.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = |title: &str, pairs: Vec<(&str, String)>| {
            let _ = writeln!(s, "# {title}");
            for (k, v) in pairs {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        section(
            "run",
            vec![
                ("seed", self.seed.to_string()),
                ("sweep_aspect_ratios", join(&self.sweep_aspect_ratios)),
                ("sweep_t_hot", join(&self.sweep_t_hot)),
                ("sweep_seeds", join(&self.sweep_seeds)),
                ("data", self.data.display().to_string()),
                ("checkpoint", self.checkpoint.display().to_string()),
                ("trajectory", self.trajectory.display().to_string()),
                ("predictions", self.predictions.display().to_string()),
                ("rollout_start", self.rollout_start.to_string()),
                ("rollout_horizon", self.rollout_horizon.to_string()),
                ("profile_y", self.profile_y.to_string()),
                ("map_steps", join(&self.map_steps)),
            ],
        );
        section("solver", self.solver.to_key_values());
        section("model", self.model.to_key_values());
        section("training", self.train.to_key_values());
        s
    }
}
