use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};
use umgnet_core::evaluation::{Aggregate, MetricsReport};
use umgnet_core::model::UpliftPrediction;

use crate::error::{AppError, AppResult};

/// One compact JSON object per line.
pub fn jsonl<T: Serialize>(items: &[T]) -> AppResult<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| AppError::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn pretty<T: Serialize>(value: &T) -> AppResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| AppError::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Hex SHA-256 of a value's compact JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> AppResult<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| AppError::Format(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    metadata: &'a umgnet_core::evaluation::RunMetadata,
    summary: &'a umgnet_core::evaluation::Summary,
}

/// `records.jsonl` and `summary.json` contents.
pub fn metrics_files(report: &MetricsReport) -> AppResult<(String, String)> {
    Ok((
        jsonl(&report.records)?,
        pretty(&SummaryFile {
            metadata: &report.metadata,
            summary: &report.summary,
        })?,
    ))
}

fn cell(a: &Aggregate) -> String {
    match (a.mean, a.std) {
        (Some(m), Some(s)) if a.missing > 0 => format!("{m:.3} ± {s:.3} ({} missing)", a.missing),
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        _ => format!("n/a ({} missing)", a.missing),
    }
}

/// Human-readable summary table.
pub fn summary_table(report: &MetricsReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model {} ({}), {} folds x {} seeds",
        report.metadata.model.as_str(),
        report.metadata.gnn,
        report.metadata.folds,
        report.metadata.seeds.len()
    );
    let _ = writeln!(out, "{:<10} {}", "up@40", cell(&s.up40));
    let _ = writeln!(out, "{:<10} {}", "up@20", cell(&s.up20));
    let _ = writeln!(out, "{:<10} {}", "test ATE", cell(&s.test_ate));
    out
}

/// `user_id,treated,control,uplift,uncertainty` rows.
pub fn predictions_csv(user_ids: &[String], pred: &UpliftPrediction) -> String {
    let mut out = String::from("user_id,treated,control,uplift,uncertainty\n");
    for (u, id) in user_ids.iter().enumerate() {
        let _ = writeln!(
            out,
            "{id},{},{},{},{}",
            pred.treated[u], pred.control[u], pred.uplift[u], pred.uncertainty[u]
        );
    }
    out
}
