//! Pipeline config file and the artifact layout under its root.

use std::path::{Path, PathBuf};

use misinfo_core::deploy::{DeploymentStrategy, DEFAULT_TRAFFIC_FLOOR};
use misinfo_core::graph::DEFAULT_EDGE_THRESHOLD;
use misinfo_core::ingest::{FloorBasis, LogFormat};
use misinfo_core::{ModelConfig, Month};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const DEFAULT_PORT: u16 = 8080;

/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw referrer log. Optional when the root already holds `traffic.csv`.
    #[serde(default)]
    pub logs: Option<PathBuf>,
    #[serde(default)]
    pub log_format: Option<LogFormat>,
    #[serde(default)]
    pub aliases: Option<PathBuf>,
    pub labels: Vec<PathBuf>,
    /// Category registry CSV; the built-in registry when absent.
    #[serde(default)]
    pub registry: Option<PathBuf>,
    pub artifact_root: PathBuf,
    /// Review event log; `<artifact_root>/reviews.jsonl` when absent.
    #[serde(default)]
    pub review_log: Option<PathBuf>,
    #[serde(default = "default_edge_threshold")]
    pub edge_threshold: u64,
    /// Applied at ingest when set.
    #[serde(default)]
    pub privacy_floor: Option<u64>,
    #[serde(default)]
    pub floor_basis: FloorBasis,
    /// Overrides the strategy's own floor.
    #[serde(default = "default_traffic_floor")]
    pub traffic_floor: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train_month: Option<Month>,
    #[serde(default = "DeploymentStrategy::one_hop")]
    pub strategy: DeploymentStrategy,
    #[serde(default = "default_port")]
    pub port: u16,
}

fn default_edge_threshold() -> u64 {
    DEFAULT_EDGE_THRESHOLD
}

fn default_traffic_floor() -> u64 {
    DEFAULT_TRAFFIC_FLOOR
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

impl PipelineConfig {
    pub fn load(path: &Path) -> AppResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| AppError::new("io", format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_reader(file).map_err(|e| AppError::new("invalid_config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in self.logs.iter_mut().chain(&mut self.aliases).chain(&mut self.registry).chain(&mut self.review_log) {
            fix(p);
        }
        self.labels.iter_mut().for_each(fix);
        fix(&mut self.artifact_root);
    }

    pub fn validate(&self) -> AppResult<()> {
        let inputs = self.logs.iter().chain(&self.aliases).chain(&self.registry).chain(&self.labels);
        for p in inputs {
            if !p.exists() {
                return Err(AppError::new("missing_input", format!("{} does not exist", p.display())));
            }
        }
        if self.labels.is_empty() {
            return Err(AppError::new("invalid_config", "at least one label file is required"));
        }
        if self.edge_threshold == 0 || self.traffic_floor == 0 || self.privacy_floor == Some(0) {
            return Err(AppError::new("invalid_config", "thresholds must be positive"));
        }
        self.model.validate()?;
        self.strategy().validate()?;
        Ok(())
    }

    pub fn strategy(&self) -> DeploymentStrategy {
        DeploymentStrategy { traffic_floor: self.traffic_floor, ..self.strategy.clone() }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.artifact_root)
    }

    pub fn review_log(&self) -> PathBuf {
        self.review_log.clone().unwrap_or_else(|| self.layout().review_log())
    }
}

/// Where each stage puts its artifacts under one root directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn traffic(&self) -> PathBuf {
        self.root.join("traffic.csv")
    }

    pub fn graphs(&self) -> PathBuf {
        self.root.join("graphs")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn review_log(&self) -> PathBuf {
        self.root.join("reviews.jsonl")
    }
}
