//! Uplift metrics, linear S/T baselines and the inverted k-fold protocol.

mod baseline;
mod experiment;
mod metrics;

pub use baseline::{fit_baseline, predict_baseline, BaselineKind, BaselineModel, Ridge, DEFAULT_RIDGE};
pub use experiment::{
    fold_plans, run_experiment, run_fold, Aggregate, ExperimentConfig, FoldRecord, MetricsReport, ModelSpec,
    RunMetadata, Summary,
};
pub use metrics::{ate, top_set, uplift_at_k};
