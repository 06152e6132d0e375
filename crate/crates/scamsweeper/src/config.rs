//! Pipeline configuration: one TOML file, flags override individual keys.

use std::path::Path;

use scamsweeper_core::graph::TemporalMultigraph;
use scamsweeper_core::model::ModelConfig;
use scamsweeper_core::synth::SynthConfig;
use scamsweeper_core::train::TrainConfig;
use scamsweeper_core::walk::{WalkConfig, WalkDirection};
use serde::{Deserialize, Serialize};

use crate::hashing::json_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub structural_window: usize,
    pub interval_width: u64,
    /// Temporal softmax temperature in seconds; unset means the graph's mean
    /// inter-event gap.
    pub tau: Option<f64>,
    pub max_walk_len: usize,
    pub max_intervals: usize,
    pub direction: WalkDirection,
    pub walks_per_node: usize,
    /// Degree-matched normal accounts sampled per malicious account.
    pub normal_ratio: f64,
}

impl Default for WalkSection {
    fn default() -> Self {
        let w = WalkConfig::default();
        Self {
            structural_window: w.structural_window,
            interval_width: w.interval_width,
            tau: None,
            max_walk_len: w.max_walk_len,
            max_intervals: w.max_intervals,
            direction: w.direction,
            walks_per_node: 5,
            normal_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads for training and evaluation; 0 = all cores.
    pub threads: usize,
    pub synth: SynthConfig,
    pub walk: WalkSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            synth: SynthConfig::default(),
            walk: WalkSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub structural_window: Option<usize>,
    pub interval_width: Option<u64>,
    pub walks_per_node: Option<usize>,
    pub ablation: Option<scamsweeper_core::train::Ablation>,
    pub threads: Option<usize>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), reason: e.message().to_string() })
    }

    /// Parses `path` when given, then applies flags and copies shared values
    /// (seed, structural window) into every section.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ResolveError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ResolveError::Io(crate::io::IoError::io(p, e)))?;
                Self::from_toml(&text, &p.display().to_string())?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.structural_window {
            self.walk.structural_window = w;
        }
        if let Some(w) = o.interval_width {
            self.walk.interval_width = w;
        }
        if let Some(k) = o.walks_per_node {
            self.walk.walks_per_node = k;
        }
        if let Some(a) = o.ablation {
            self.train.ablation = a;
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.model.n_max = self.walk.structural_window;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| invalid(&e))?;
        self.model.validate().map_err(|e| invalid(&e))?;
        self.train.validate(self.model.classes).map_err(|e| invalid(&e))?;
        self.walk_config(None).validate().map_err(|e| invalid(&e))?;
        if self.walk.tau.is_some_and(|t| !(t > 0.0)) {
            return Err(ConfigError::Invalid("walk.tau must be positive".into()));
        }
        if !(self.walk.normal_ratio >= 0.0) {
            return Err(ConfigError::Invalid("walk.normal_ratio must be non-negative".into()));
        }
        Ok(())
    }

    /// Walk config for `g`; `tau` falls back to the graph's mean inter-event gap.
    pub fn walk_config(&self, g: Option<&TemporalMultigraph>) -> WalkConfig {
        let base = g.map(WalkConfig::for_graph).unwrap_or_default();
        WalkConfig {
            max_walk_len: self.walk.max_walk_len,
            structural_window: self.walk.structural_window,
            interval_width: self.walk.interval_width,
            tau: self.walk.tau.unwrap_or(base.tau),
            max_intervals: self.walk.max_intervals,
            seed: self.seed,
            direction: self.walk.direction,
        }
    }

    /// Model config of the configured ablation variant.
    pub fn model_config(&self) -> ModelConfig {
        self.train.ablation.apply(&self.model)
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
