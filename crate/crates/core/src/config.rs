//! Declarative experiment description, read from and written to TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmaes::CmaesConfig;
use crate::error::{Error, Result};
use crate::interlayer::AttenuationSweepConfig;
use crate::pipeline::Mode;
use crate::readout::{default_lambda_grid, Metric, RidgeConfig};
use crate::system::PhysicsConfig;
use crate::tasks::{ChannelTaskSpec, ShiftTaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Drives cross-validation partitions, the optimizer and detection noise.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub task: TaskConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub ridge: RidgeSettings,
    #[serde(default)]
    pub interlayer: InterlayerStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskConfig {
    Channel(ChannelTaskSpec),
    Santafe(SantaFeTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Channel(_) => "channel",
            TaskConfig::Santafe(_) => "santafe",
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            TaskConfig::Channel(_) => Metric::Ser,
            TaskConfig::Santafe(_) => Metric::Nmse,
        }
    }

    pub fn washout(&self) -> usize {
        match self {
            TaskConfig::Channel(s) => s.washout,
            TaskConfig::Santafe(s) => s.washout,
        }
    }

    pub fn train_len(&self) -> usize {
        match self {
            TaskConfig::Channel(s) => s.train_len,
            TaskConfig::Santafe(s) => s.train_len,
        }
    }

    pub fn test_len(&self) -> usize {
        match self {
            TaskConfig::Channel(s) => s.test_len,
            TaskConfig::Santafe(s) => s.test_len,
        }
    }
}

/// One-step-ahead style prediction on a chaotic series. Without a dataset
/// file the synthetic surrogate generated from `surrogate_seed` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SantaFeTask {
    pub tau: i32,
    pub train_len: usize,
    pub test_len: usize,
    pub washout: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub surrogate_seed: u64,
}

impl Default for SantaFeTask {
    fn default() -> Self {
        let s = ShiftTaskSpec::default();
        Self {
            tau: s.tau,
            train_len: s.train_len,
            test_len: s.test_len,
            washout: s.washout,
            dataset: None,
            surrogate_seed: 0,
        }
    }
}

impl SantaFeTask {
    pub fn shift_spec(&self) -> ShiftTaskSpec {
        ShiftTaskSpec {
            tau: self.tau,
            train_len: self.train_len,
            test_len: self.test_len,
            washout: self.washout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeSettings {
    pub lambda_grid: Vec<f64>,
    pub n_folds: usize,
    /// Partition used for every objective evaluation during inter-layer optimization.
    pub optimization_fold: u64,
}

impl Default for RidgeSettings {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            n_folds: 100,
            optimization_fold: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum InterlayerStrategy {
    #[default]
    None,
    UniformSweep(AttenuationSweepConfig),
    Cmaes(CmaesStrategy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesStrategy {
    /// Uniform starting attenuation of every line.
    pub x0_db: f64,
    /// Re-draw task and detection noise for every evaluation.
    pub evaluation_noise: bool,
    pub optimizer: CmaesConfig,
}

impl Default for CmaesStrategy {
    fn default() -> Self {
        Self {
            x0_db: -10.0,
            evaluation_noise: false,
            optimizer: CmaesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    Tau,
    /// Comb line spacing Ω in GHz.
    OmegaDetuning,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Tau => "tau",
            SweepAxis::OmegaDetuning => "omega_detuning",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl ExperimentConfig {
    /// Default physics, readout and optimizer settings for `task` in `mode`;
    /// deep mode gets the uniform attenuation sweep.
    pub fn new(mode: Mode, task: TaskConfig) -> Self {
        let interlayer = if mode == Mode::Deep {
            InterlayerStrategy::UniformSweep(AttenuationSweepConfig::default())
        } else {
            InterlayerStrategy::None
        };
        Self {
            mode,
            seed: 0,
            output_dir: default_output_dir(),
            task,
            physics: PhysicsConfig::default(),
            ridge: RidgeSettings::default(),
            interlayer,
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// SHA-256 of the serialized configuration without its output
    /// directory, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let placed_anywhere = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(placed_anywhere.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn ridge_config(&self) -> RidgeConfig {
        RidgeConfig {
            lambda_grid: self.ridge.lambda_grid.clone(),
            washout: self.task.washout(),
            seed: self.seed,
            n_folds: self.ridge.n_folds,
        }
    }

    /// Checks every section; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        match &self.task {
            TaskConfig::Channel(s) => s.validate()?,
            TaskConfig::Santafe(s) => s.shift_spec().validate()?,
        }
        self.ridge_config()
            .validate()
            .map_err(|e| Error::config("ridge", e.to_string()))?;
        match &self.interlayer {
            InterlayerStrategy::None if self.mode == Mode::Deep => {
                return Err(Error::config(
                    "interlayer.strategy",
                    "deep mode needs `uniform_sweep` or `cmaes`",
                ));
            }
            InterlayerStrategy::None => {}
            InterlayerStrategy::UniformSweep(s) => s.validate()?,
            InterlayerStrategy::Cmaes(c) => {
                c.optimizer.validate(self.physics.n_lines).map_err(|e| match e {
                    Error::Config { field, message } => Error::Config {
                        field: format!("interlayer.optimizer.{}", field.trim_start_matches("cmaes.")),
                        message,
                    },
                    other => other,
                })?;
                if !c.x0_db.is_finite() {
                    return Err(Error::config("interlayer.x0_db", "must be finite"));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep.values", "sweep grid is empty"));
            }
            for &v in &sweep.values {
                self.at_point(sweep.axis, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// This configuration with `axis` set to `value` and no sweep.
    pub fn at_point(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match (axis, &mut cfg.task) {
            (SweepAxis::SnrDb, TaskConfig::Channel(s)) => s.snr_db = value,
            (SweepAxis::SnrDb, _) => {
                return Err(Error::config("sweep.axis", "snr_db needs the channel task"));
            }
            (SweepAxis::Tau, TaskConfig::Santafe(s)) => {
                if value.fract() != 0.0 || value.abs() > i32::MAX as f64 {
                    return Err(Error::config("sweep.values", format!("tau must be an integer, got {value}")));
                }
                s.tau = value as i32;
            }
            (SweepAxis::Tau, _) => {
                return Err(Error::config("sweep.axis", "tau needs the santafe task"));
            }
            (SweepAxis::OmegaDetuning, _) => cfg.physics.line_spacing_ghz = value,
        }
        Ok(cfg)
    }
}
