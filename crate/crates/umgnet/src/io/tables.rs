use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use umgnet_core::graph::{BipartiteGraph, Dataset, ProductFeatures, SyntheticDataset};
use umgnet_core::tensor::Matrix;

use crate::error::{AppError, AppResult};

pub const EDGES_FILE: &str = "edges.csv";
pub const FEATURES_FILE: &str = "user_features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const EFFECTS_FILE: &str = "effects.csv";

/// A dataset together with the external ids of its rows.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub user_ids: Vec<String>,
    pub product_ids: Vec<String>,
    pub duplicate_edges: usize,
}

fn reader(path: &Path) -> AppResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn ingest(path: &Path, msg: impl std::fmt::Display) -> AppError {
    AppError::Ingest(format!("{}: {msg}", path.display()))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[String]) -> AppResult<()> {
    let header = rdr.headers().map_err(|e| ingest(path, e))?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(ingest(
            path,
            format!("header must be '{}', found '{}'", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn records(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> AppResult<Vec<(u64, Vec<String>)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec.iter().map(|f| f.trim().to_string()).collect()));
    }
    Ok(out)
}

/// Reads the edge, user-feature and label tables.
///
/// Users are the rows of the feature table, products the items seen in the
/// edge table; both are sorted by id before indexing. Product features are
/// one-hot.
pub fn load_dataset(edges: &Path, features: &Path, labels: &Path) -> AppResult<LoadedDataset> {
    let mut rdr = reader(features)?;
    let header: Vec<String> = rdr.headers().map_err(|e| ingest(features, e))?.iter().map(|s| s.trim().to_string()).collect();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("user_id".to_string())
        .chain((0..d).map(|i| format!("f{i}")))
        .collect();
    if d == 0 {
        return Err(ingest(features, "expected columns user_id,f0,...,f{d-1}"));
    }
    check_header(features, &mut rdr, &expected)?;
    let mut feature_rows: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for (line, rec) in records(features, &mut rdr)? {
        let values = rec[1..]
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v.parse::<f32>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ingest(features, format!("line {line}: feature f{j} '{v}' is not a finite number")))
            })
            .collect::<AppResult<Vec<f32>>>()?;
        if rec[0].is_empty() {
            return Err(ingest(features, format!("line {line}: empty user id")));
        }
        if feature_rows.insert(rec[0].clone(), values).is_some() {
            return Err(ingest(features, format!("line {line}: duplicate user '{}'", rec[0])));
        }
    }
    let user_ids: Vec<String> = feature_rows.keys().cloned().collect();
    let user_index: BTreeMap<&str, usize> = user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();

    let mut rdr = reader(edges)?;
    check_header(edges, &mut rdr, &["user_id".into(), "item_id".into()])?;
    let edge_rows = records(edges, &mut rdr)?;
    let mut products = BTreeSet::new();
    for (line, rec) in &edge_rows {
        if !user_index.contains_key(rec[0].as_str()) {
            return Err(ingest(edges, format!("line {line}: user '{}' has no feature row", rec[0])));
        }
        if rec[1].is_empty() {
            return Err(ingest(edges, format!("line {line}: empty item id")));
        }
        products.insert(rec[1].clone());
    }
    let product_ids: Vec<String> = products.into_iter().collect();
    if product_ids.is_empty() {
        return Err(ingest(edges, "no edges, so no products"));
    }
    let product_index: BTreeMap<&str, usize> =
        product_ids.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let pairs: Vec<(usize, usize)> = edge_rows
        .iter()
        .map(|(_, r)| (user_index[r[0].as_str()], product_index[r[1].as_str()]))
        .collect();

    let n = user_ids.len();
    let mut treatment = vec![false; n];
    let mut outcome = vec![0.0f32; n];
    let mut mask = vec![false; n];
    let mut rdr = reader(labels)?;
    check_header(labels, &mut rdr, &["user_id".into(), "treatment".into(), "outcome".into()])?;
    for (line, rec) in records(labels, &mut rdr)? {
        let u = *user_index
            .get(rec[0].as_str())
            .ok_or_else(|| ingest(labels, format!("line {line}: unknown user '{}'", rec[0])))?;
        if mask[u] {
            return Err(ingest(labels, format!("line {line}: duplicate label for '{}'", rec[0])));
        }
        treatment[u] = match rec[1].as_str() {
            "1" => true,
            "0" => false,
            other => return Err(ingest(labels, format!("line {line}: treatment '{other}' is not 0 or 1"))),
        };
        outcome[u] = rec[2]
            .parse::<f32>()
            .ok()
            .filter(|y| y.is_finite())
            .ok_or_else(|| ingest(labels, format!("line {line}: outcome '{}' is not a finite number", rec[2])))?;
        mask[u] = true;
    }

    let (graph, duplicate_edges) = BipartiteGraph::new(n, product_ids.len(), &pairs)?;
    if duplicate_edges > 0 {
        log::warn!("{}: dropped {duplicate_edges} duplicate edge rows", edges.display());
    }
    let x: Vec<f32> = feature_rows.into_values().flatten().collect();
    let dataset = Dataset::new(
        graph,
        Matrix::from_vec(n, d, x)?,
        ProductFeatures::OneHot,
        treatment,
        outcome,
        mask,
    )?;
    Ok(LoadedDataset {
        dataset,
        user_ids,
        product_ids,
        duplicate_edges,
    })
}

/// Loads `edges.csv`, `user_features.csv` and `labels.csv` from one directory.
pub fn load_dataset_dir(dir: &Path) -> AppResult<LoadedDataset> {
    if !dir.is_dir() {
        return Err(AppError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    load_dataset(&dir.join(EDGES_FILE), &dir.join(FEATURES_FILE), &dir.join(LABELS_FILE))
}

/// Zero-padded ids that sort in index order.
pub fn padded_ids(prefix: &str, count: usize) -> Vec<String> {
    let width = count.saturating_sub(1).to_string().len();
    (0..count).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// The five synthetic outputs as (file name, contents), metadata last.
pub fn synthetic_tables(sim: &SyntheticDataset, metadata_json: String) -> Vec<(&'static str, String)> {
    let data = &sim.dataset;
    let users = padded_ids("u", data.users());
    let items = padded_ids("p", data.products());
    let mut edges = String::from("user_id,item_id\n");
    for &(u, p) in data.graph().edges() {
        let _ = writeln!(edges, "{},{}", users[u], items[p]);
    }
    let x = data.user_features();
    let mut features = String::from("user_id");
    for j in 0..x.cols() {
        let _ = write!(features, ",f{j}");
    }
    features.push('\n');
    for (u, id) in users.iter().enumerate() {
        features.push_str(id);
        for v in x.row(u) {
            let _ = write!(features, ",{v}");
        }
        features.push('\n');
    }
    let mut labels = String::from("user_id,treatment,outcome\n");
    let mut effects = String::from("user_id,effect\n");
    for (u, id) in users.iter().enumerate() {
        let _ = writeln!(labels, "{id},{},{}", u8::from(data.treatment()[u]), data.outcome()[u]);
        let _ = writeln!(effects, "{id},{}", sim.effects[u]);
    }
    vec![
        (EDGES_FILE, edges),
        (FEATURES_FILE, features),
        (LABELS_FILE, labels),
        (EFFECTS_FILE, effects),
        ("metadata.json", metadata_json),
    ]
}

/// Reads `effects.csv` in the order of `user_ids`.
pub fn load_effects(path: &Path, user_ids: &[String]) -> AppResult<Vec<f64>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["user_id".into(), "effect".into()])?;
    let mut by_id = BTreeMap::new();
    for (line, rec) in records(path, &mut rdr)? {
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| ingest(path, format!("line {line}: effect '{}' is not a number", rec[1])))?;
        by_id.insert(rec[0].clone(), v);
    }
    user_ids
        .iter()
        .map(|u| by_id.get(u).copied().ok_or_else(|| ingest(path, format!("no effect for user '{u}'"))))
        .collect()
}
