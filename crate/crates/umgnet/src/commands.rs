//! The four subcommands. Each validates its whole configuration before it
//! computes anything and writes its files only after all work has succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use umgnet_core::acquisition::{active_learning_run, ActiveOutcome, RoundRecord};
use umgnet_core::evaluation::{
    ate, fold_plans, run_fold, uplift_at_k, ExperimentConfig, MetricsReport,
};
use umgnet_core::graph::{generate_synthetic, normalize_features, Dataset};
use umgnet_core::model::{mc_dropout_predict, predict, train_with_inputs, ModelInputs};
use umgnet_core::Error as CoreError;

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};
use crate::io::report::{hash_json, jsonl, metrics_files, predictions_csv, pretty, summary_table};
use crate::io::tables::{load_dataset_dir, synthetic_tables, LoadedDataset};
use crate::io::{checkpoint, write_file};
use crate::runner::run_parallel;

fn write_outputs(dir: &Path, files: &[(&str, String)]) -> AppResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            write_file(&path, body)?;
            Ok(path)
        })
        .collect()
}

#[derive(Serialize)]
struct SyntheticMetadata<'a> {
    config: &'a umgnet_core::graph::SyntheticConfig,
    treatment_effect: f64,
    feature_weights: &'a [f64],
    true_ate: f64,
    edges: usize,
}

pub fn cmd_synth(cfg: &RunConfig) -> AppResult<Vec<PathBuf>> {
    cfg.validate()?;
    let sc = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| AppError::Config("synth needs a [synthetic] section".into()))?;
    let out = cfg.output_dir()?;
    let sim = generate_synthetic(sc)?;
    let meta = pretty(&SyntheticMetadata {
        config: sc,
        treatment_effect: sim.treatment_effect,
        feature_weights: &sim.feature_weights,
        true_ate: sim.true_ate(),
        edges: sim.dataset.graph().edges().len(),
    })?;
    log::info!(
        "simulated {} users, {} products, {} edges, w_t = {:.4}",
        sc.users,
        sc.products,
        sim.dataset.graph().edges().len(),
        sim.treatment_effect
    );
    write_outputs(out, &synthetic_tables(&sim, meta))
}

/// Loads the configured dataset directory.
pub fn load_data(cfg: &RunConfig) -> AppResult<LoadedDataset> {
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| AppError::Config("no dataset: add a [data] section with `dir`".into()))?;
    let mut loaded = load_dataset_dir(&data.dir)?;
    if data.normalize {
        let d = &loaded.dataset;
        loaded.dataset = Dataset::new(
            d.graph().clone(),
            normalize_features(d.user_features()),
            d.product_features().clone(),
            d.treatment().to_vec(),
            d.outcome().to_vec(),
            d.label_mask().to_vec(),
        )?;
    }
    log::info!(
        "loaded {} users ({} labeled), {} products, {} edges",
        loaded.dataset.users(),
        loaded.dataset.labeled_users().len(),
        loaded.dataset.products(),
        loaded.dataset.graph().edges().len()
    );
    Ok(loaded)
}

pub fn cmd_train(cfg: &RunConfig) -> AppResult<Vec<PathBuf>> {
    cfg.validate()?;
    let out = cfg.output_dir()?;
    let loaded = load_data(cfg)?;
    let inputs = ModelInputs::<f32>::new(&loaded.dataset);
    let labeled = loaded.dataset.labeled_users();
    let (model, report) = train_with_inputs(&inputs, &labeled, &cfg.model)?;
    for w in &report.warnings {
        log::warn!("{w:?}");
    }
    let mut pred = predict(&model, &inputs)?;
    pred.uncertainty = mc_dropout_predict(&model, &inputs, cfg.train.mc_passes, cfg.model.seed)?.uncertainty;
    write_outputs(
        out,
        &[
            ("model.json", checkpoint::to_json(&model)?),
            ("trace.jsonl", jsonl(&report.trace)?),
            ("predictions.csv", predictions_csv(&loaded.user_ids, &pred)),
        ],
    )
}

/// Runs every (seed, fold) pair on `cfg.workers` threads.
pub fn evaluate(cfg: &RunConfig, dataset: &Dataset) -> AppResult<MetricsReport> {
    let exp = ExperimentConfig {
        spec: cfg.eval.model,
        model: cfg.model.clone(),
        folds: cfg.eval.folds,
        seeds: cfg.eval.seeds.clone(),
        ridge: cfg.eval.ridge,
    };
    exp.validate()?;
    let plans = fold_plans(dataset, &exp)?;
    let inputs = ModelInputs::<f32>::new(dataset);
    let tasks: Vec<(usize, usize)> = (0..plans.len())
        .flat_map(|p| (0..plans[p].k).map(move |f| (p, f)))
        .collect();
    let records = run_parallel(&tasks, cfg.workers, |&(p, f)| {
        let r = run_fold(dataset, &inputs, &exp, &plans[p], f);
        if let Ok(rec) = &r {
            log::info!("seed {} fold {}: up@20 {:?}", rec.seed, rec.fold, rec.up20);
        }
        r
    })
    .into_iter()
    .collect::<Result<Vec<_>, CoreError>>()?;
    let mut report = MetricsReport::assemble(&exp, records);
    report.metadata.config_hash = Some(hash_json(&cfg.fingerprint())?);
    report.metadata.fold_plan_hashes = plans.iter().map(hash_json).collect::<AppResult<_>>()?;
    Ok(report)
}

pub fn cmd_eval(cfg: &RunConfig) -> AppResult<(MetricsReport, Vec<PathBuf>)> {
    cfg.validate()?;
    let out = cfg.output_dir()?;
    let loaded = load_data(cfg)?;
    let report = evaluate(cfg, &loaded.dataset)?;
    let (records, summary) = metrics_files(&report)?;
    print!("{}", summary_table(&report));
    let files = write_outputs(out, &[("records.jsonl", records), ("summary.json", summary)])?;
    Ok((report, files))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveMetrics {
    pub policy: String,
    pub labeled: usize,
    pub remainder: usize,
    pub up40: Option<f64>,
    pub up20: Option<f64>,
    pub remainder_ate: Option<f64>,
    pub config_hash: String,
}

fn optional(r: umgnet_core::Result<f64>) -> AppResult<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CoreError::UndefinedAte { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// up@40, up@20 and ATE on the users an active run never labeled.
pub fn active_metrics(cfg: &RunConfig, dataset: &Dataset, outcome: &ActiveOutcome<f32>) -> AppResult<ActiveMetrics> {
    let y: Vec<f64> = dataset.outcome().iter().map(|&v| v as f64).collect();
    let t = dataset.treatment();
    let rest = &outcome.remainder;
    let tau = &outcome.prediction.uplift;
    let (up40, up20, remainder_ate) = if rest.is_empty() {
        (None, None, None)
    } else {
        (
            optional(uplift_at_k(tau, &y, t, rest, 0.4))?,
            optional(uplift_at_k(tau, &y, t, rest, 0.2))?,
            optional(ate(&y, t, rest))?,
        )
    };
    Ok(ActiveMetrics {
        policy: cfg.active.policy.as_str().into(),
        labeled: outcome.labeled.len(),
        remainder: rest.len(),
        up40,
        up20,
        remainder_ate,
        config_hash: hash_json(&cfg.fingerprint())?,
    })
}

pub fn cmd_active(cfg: &RunConfig) -> AppResult<(ActiveMetrics, Vec<PathBuf>)> {
    cfg.validate()?;
    let out = cfg.output_dir()?;
    let loaded = load_data(cfg)?;
    let dataset = &loaded.dataset;
    let outcome = active_learning_run::<f32>(dataset, &cfg.model, &cfg.active)?;
    for w in &outcome.warnings {
        log::warn!("{w:?}");
    }
    outcome
        .audit(dataset.treatment())
        .map_err(|m| AppError::Core(CoreError::Numerical(format!("selection audit failed: {m}"))))?;
    let metrics = active_metrics(cfg, dataset, &outcome)?;
    let history: Vec<HistoryLine> = outcome
        .history
        .iter()
        .map(|r| HistoryLine::new(r, &loaded.user_ids))
        .collect();
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "{} rounds, {} labeled; remainder up@20 {}, up@40 {}, ATE {}",
        outcome.history.len().saturating_sub(1),
        metrics.labeled,
        show(metrics.up20),
        show(metrics.up40),
        show(metrics.remainder_ate)
    );
    let files = write_outputs(
        out,
        &[
            ("history.jsonl", jsonl(&history)?),
            ("predictions.csv", predictions_csv(&loaded.user_ids, &outcome.prediction)),
            ("metrics.json", pretty(&metrics)?),
            ("model.json", checkpoint::to_json(&outcome.model)?),
        ],
    )?;
    Ok((metrics, files))
}

/// A history record with external user ids next to the indices.
#[derive(Serialize)]
struct HistoryLine<'a> {
    #[serde(flatten)]
    record: &'a RoundRecord,
    batch_ids: Vec<&'a str>,
}

impl<'a> HistoryLine<'a> {
    fn new(record: &'a RoundRecord, ids: &'a [String]) -> Self {
        HistoryLine {
            record,
            batch_ids: record.batch.iter().map(|&u| ids[u].as_str()).collect(),
        }
    }
}

