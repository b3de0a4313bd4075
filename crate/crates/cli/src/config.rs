//! The run configuration file. Relative paths in the file are taken
//! relative to the file itself; flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use actshift::eval::GridSpec;
use actshift::models::{Family, Hyperparams, RollingOptions, TrainingSchedule};
use actshift::recommend::RecommendationConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw REFIT-style consumption file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consumption: Option<PathBuf>,
    /// Hourly dataset written by `ingest`; defaults to `<output>/hourly.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carbon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price: Option<PathBuf>,
    /// Model store; defaults to `<output>/models`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Hours after midnight at which each horizon starts.
    pub hour_offset: usize,
    /// Replaces the family's default tuning grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Hyperparams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub use_th: f64,
    pub act_th: f64,
    /// Cold-start target for the availability and usage agents (AUC).
    pub auc_threshold: f64,
    /// Cold-start target for the activity agent (agreement score).
    pub equal_threshold: f64,
    pub grid: GridSpec,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            use_th: 0.5,
            act_th: 0.5,
            auc_threshold: 0.79,
            equal_threshold: 0.65,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: ModelConfig,
    pub schedule: TrainingSchedule,
    pub recommend: RecommendationConfig,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::user(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.rebase(base);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::user("no seed configured (set `seed` in the config or pass --seed)"))
    }

    pub fn output(&self) -> PathBuf {
        self.paths.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn dataset(&self) -> PathBuf {
        self.paths.dataset.clone().unwrap_or_else(|| self.output().join("hourly.csv"))
    }

    pub fn models(&self) -> PathBuf {
        self.paths.models.clone().unwrap_or_else(|| self.output().join("models"))
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| {
            CliError::user(format!("no `paths.{key}` configured (set it in the config or pass --{flag})"))
        })
    }

    pub fn rolling(&self) -> Result<RollingOptions, CliError> {
        Ok(RollingOptions {
            family: self.model.family,
            grid: self.model.grid.clone(),
            schedule: self.schedule,
            seed: self.seed()?,
            hour_offset: self.model.hour_offset,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.recommend.validate()?;
        if self.model.hour_offset >= 24 {
            return Err(CliError::user(format!("model.hour_offset must be below 24, got {}", self.model.hour_offset)));
        }
        for (name, v) in [("evaluate.use_th", self.evaluate.use_th), ("evaluate.act_th", self.evaluate.act_th)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::user(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        let s = &self.schedule;
        if s.headstart_days == 0 || s.retune_interval_days == 0 || s.training_window_days == 0 {
            return Err(CliError::user("schedule lengths must be positive"));
        }
        if !(0.0..1.0).contains(&s.validation_fraction) {
            return Err(CliError::user("schedule.validation_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.consumption,
            &mut self.dataset,
            &mut self.catalog,
            &mut self.mapping,
            &mut self.carbon,
            &mut self.price,
            &mut self.models,
            &mut self.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
