//! The TOML run configuration and its command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umgnet_core::acquisition::{ActiveConfig, Policy};
use umgnet_core::evaluation::{ModelSpec, DEFAULT_RIDGE};
use umgnet_core::graph::SyntheticConfig;
use umgnet_core::model::{GnnKind, ModelConfig};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `edges.csv`, `user_features.csv` and `labels.csv`;
    /// relative paths resolve against the config file's directory.
    pub dir: PathBuf,
    /// Standardize user feature columns after loading.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: ModelSpec,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub ridge: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model: ModelSpec::Umgnet,
            folds: 5,
            seeds: (0..5).collect(),
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Dropout passes used for the uncertainty column of the predictions.
    pub mc_passes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { mc_passes: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; when set it replaces every component seed.
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: usize,
    pub data: Option<DataConfig>,
    pub synthetic: Option<SyntheticConfig>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub active: ActiveConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output: None,
            workers: 1,
            data: None,
            synthetic: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            active: ActiveConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub gnn: Option<GnnKind>,
    pub policy: Option<Policy>,
    pub folds: Option<usize>,
    pub frac_initial: Option<f64>,
    pub frac_target: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string().trim().replace('\n', " ")))
    }

    /// Reads a config file and resolves the data directory against it.
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(data) = &mut cfg.data {
            if data.dir.is_relative() {
                if let Some(base) = path.parent() {
                    data.dir = base.join(&data.dir);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
            self.eval.seeds = vec![o.seed.unwrap_or_default()];
        }
        if let Some(out) = &o.output {
            self.output = Some(out.clone());
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(g) = o.gnn {
            if g != self.model.gnn {
                self.model.gnn = g;
                self.model.gnn_layers = None;
            }
        }
        if let Some(p) = o.policy {
            self.active.policy = p;
        }
        if let Some(k) = o.folds {
            self.eval.folds = k;
        }
        if let Some(a) = o.frac_initial {
            self.active.initial_fraction = a;
        }
        if let Some(b) = o.frac_target {
            self.active.target_fraction = b;
        }
        if let Some(seed) = self.seed {
            self.model.seed = seed;
            self.active.seed = seed;
            if let Some(s) = &mut self.synthetic {
                s.seed = seed;
            }
        }
    }

    /// Checks everything the run will use before any work starts.
    pub fn validate(&self) -> AppResult<()> {
        if self.workers == 0 {
            return Err(AppError::Config("workers must be at least 1".into()));
        }
        self.model.validate()?;
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if self.eval.seeds.is_empty() {
            return Err(AppError::Config("eval.seeds must not be empty".into()));
        }
        if self.eval.folds < 2 {
            return Err(AppError::Config(format!("eval.folds must be >= 2, got {}", self.eval.folds)));
        }
        if !(self.eval.ridge >= 0.0 && self.eval.ridge.is_finite()) {
            return Err(AppError::Config(format!("eval.ridge {} must be >= 0", self.eval.ridge)));
        }
        if self.train.mc_passes == 0 {
            return Err(AppError::Config("train.mc_passes must be positive".into()));
        }
        self.active.validate().map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn output_dir(&self) -> AppResult<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| AppError::Config("no output directory (set `output` or pass --out)".into()))
    }

    /// The settings that determine results; worker count and paths excluded.
    pub fn fingerprint(&self) -> RunConfig {
        RunConfig {
            output: None,
            workers: 1,
            data: self.data.as_ref().map(|d| DataConfig {
                dir: PathBuf::new(),
                normalize: d.normalize,
            }),
            ..self.clone()
        }
    }
}
