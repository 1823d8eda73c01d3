use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, FoldPlan};
use crate::model::{predict, train_with_inputs, ModelConfig, ModelInputs};

use super::{fit_baseline, predict_baseline, uplift_at_k, ate, BaselineKind, DEFAULT_RIDGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSpec {
    Umgnet,
    /// With the treatment-prediction head.
    UmgnetDr,
    BaselineS,
    BaselineT,
}

impl ModelSpec {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelSpec::Umgnet => "umgnet",
            ModelSpec::UmgnetDr => "umgnet-dr",
            ModelSpec::BaselineS => "baseline-s",
            ModelSpec::BaselineT => "baseline-t",
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "umgnet" => Ok(ModelSpec::Umgnet),
            "umgnet-dr" => Ok(ModelSpec::UmgnetDr),
            "baseline-s" => Ok(ModelSpec::BaselineS),
            "baseline-t" => Ok(ModelSpec::BaselineT),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected umgnet, umgnet-dr, baseline-s or baseline-t)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    /// Model settings; the seed is replaced by each run's seed.
    pub model: ModelConfig,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub ridge: f64,
}

impl ExperimentConfig {
    pub fn new(spec: ModelSpec, model: ModelConfig, folds: usize, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            spec,
            model,
            folds,
            seeds,
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge strength {} must be >= 0", self.ridge)));
        }
        self.model.validate()
    }

    fn model_for(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            seed,
            treatment_head: self.spec == ModelSpec::UmgnetDr || self.model.treatment_head,
            ..self.model.clone()
        }
    }
}

/// Metrics of one (seed, fold) run; `None` marks an undefined ATE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub seed: u64,
    pub fold: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub up40: Option<f64>,
    pub up20: Option<f64>,
    pub test_ate: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub count: usize,
    pub missing: usize,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut present = Vec::new();
        let mut missing = 0;
        for v in values {
            match v {
                Some(v) => present.push(v),
                None => missing += 1,
            }
        }
        if present.is_empty() {
            return Aggregate {
                mean: None,
                std: None,
                count: 0,
                missing,
            };
        }
        let n = present.len() as f64;
        let mean = present.iter().sum::<f64>() / n;
        let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Aggregate {
            mean: Some(mean),
            std: Some(num_traits::Float::sqrt(var)),
            count: present.len(),
            missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub up40: Aggregate,
    pub up20: Aggregate,
    pub test_ate: Aggregate,
}

impl Summary {
    pub fn of(records: &[FoldRecord]) -> Self {
        Summary {
            up40: Aggregate::of(records.iter().map(|r| r.up40)),
            up20: Aggregate::of(records.iter().map(|r| r.up20)),
            test_ate: Aggregate::of(records.iter().map(|r| r.test_ate)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model: ModelSpec,
    pub gnn: String,
    pub seeds: Vec<u64>,
    pub folds: usize,
    /// Filled in by callers that can hash the full configuration.
    pub config_hash: Option<String>,
    /// One entry per seed, filled in like `config_hash`.
    pub fold_plan_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: RunMetadata,
    pub records: Vec<FoldRecord>,
    pub summary: Summary,
}

impl MetricsReport {
    /// Orders records by (seed, fold) and recomputes the summary.
    pub fn assemble(config: &ExperimentConfig, mut records: Vec<FoldRecord>) -> Self {
        records.sort_by_key(|r| (r.seed, r.fold));
        MetricsReport {
            metadata: RunMetadata {
                model: config.spec,
                gnn: String::from(config.model.gnn.as_str()),
                seeds: config.seeds.clone(),
                folds: config.folds,
                config_hash: None,
                fold_plan_hashes: Vec::new(),
            },
            summary: Summary::of(&records),
            records,
        }
    }
}

/// One inverted fold plan per seed over the labeled users.
pub fn fold_plans(dataset: &Dataset, config: &ExperimentConfig) -> Result<Vec<FoldPlan>> {
    let labeled = dataset.labeled_users();
    config
        .seeds
        .iter()
        .map(|&seed| FoldPlan::over(&labeled, config.folds, seed))
        .collect()
}

/// Trains on fold `fold` of `plan` and scores the remaining labeled users.
pub fn run_fold(
    dataset: &Dataset,
    inputs: &ModelInputs<f32>,
    config: &ExperimentConfig,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldRecord> {
    let seed = plan.seed;
    let train_set = plan.training_set(fold);
    let eval_set = plan.evaluation_set(fold);
    let mut warnings = Vec::new();
    let uplift = match config.spec {
        ModelSpec::Umgnet | ModelSpec::UmgnetDr => {
            let (model, report) = train_with_inputs(inputs, train_set, &config.model_for(seed))?;
            warnings.extend(report.warnings.iter().map(|w| format!("{w:?}")));
            predict(&model, inputs)?.uplift
        }
        ModelSpec::BaselineS | ModelSpec::BaselineT => {
            let kind = if config.spec == ModelSpec::BaselineS {
                BaselineKind::S
            } else {
                BaselineKind::T
            };
            predict_baseline(&fit_baseline(dataset, train_set, kind, config.ridge)?, dataset)
        }
    };
    let outcome: Vec<f64> = dataset.outcome().iter().map(|&y| y as f64).collect();
    let t = dataset.treatment();
    let metric = |r: Result<f64>| -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedAte { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(FoldRecord {
        seed,
        fold,
        train_size: train_set.len(),
        eval_size: eval_set.len(),
        up40: metric(uplift_at_k(&uplift, &outcome, t, &eval_set, 0.4))?,
        up20: metric(uplift_at_k(&uplift, &outcome, t, &eval_set, 0.2))?,
        test_ate: metric(ate(&outcome, t, &eval_set))?,
        warnings,
    })
}

/// Every (seed, fold) run, sequentially. Callers wanting parallelism can fan
/// out [`run_fold`] themselves and hand the records to [`MetricsReport::assemble`].
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let inputs = ModelInputs::new(dataset);
    let mut records = Vec::new();
    for plan in fold_plans(dataset, config)? {
        for fold in 0..plan.k {
            records.push(run_fold(dataset, &inputs, config, &plan, fold)?);
        }
    }
    Ok(MetricsReport::assemble(config, records))
}
