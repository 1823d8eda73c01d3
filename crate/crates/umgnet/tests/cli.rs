use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use umgnet::commands::{cmd_active, cmd_eval, load_data};
use umgnet::config::RunConfig;
use umgnet::io::checkpoint;
use umgnet::io::report::predictions_csv;
use umgnet::io::tables::load_dataset_dir;
use umgnet_core::graph::{generate_synthetic, SyntheticConfig};
use umgnet_core::model::{predict, train, ModelConfig, ModelInputs, UpliftPrediction};

fn umgnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umgnet")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "seed = 3\n\
[synthetic]\nusers = 60\nproducts = 20\nfeatures = 3\ndensity = 0.15\n\
[data]\ndir = \"data\"\n\
[model]\nepochs = 20\n";

fn synth_into(root: &Path, body: &str) -> PathBuf {
    let cfg = write_config(root, body);
    let out = umgnet(&["synth", "--config", cfg.to_str().unwrap(), "--out", root.join("data").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    cfg
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn synth_writes_five_reingestable_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[synthetic]\nusers = 10\nproducts = 5\nfeatures = 2\ndensity = 0.4\nseed = 1\n");
    let out = dir.path().join("data");
    let r = umgnet(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(
        listing(&out),
        ["edges.csv", "effects.csv", "labels.csv", "metadata.json", "user_features.csv"]
    );

    let loaded = load_dataset_dir(&out).unwrap();
    let sim = generate_synthetic(&SyntheticConfig::new(10, 5, 2, 0.4, 1)).unwrap();
    let a = &loaded.dataset;
    let b = &sim.dataset;
    assert_eq!(a.treatment(), b.treatment());
    assert_eq!(a.label_mask(), b.label_mask());
    assert_eq!(a.outcome(), b.outcome());
    assert_eq!(a.user_features(), b.user_features());
    // products without edges do not appear in the edge table
    let mut edges_a = a.graph().edges().to_vec();
    edges_a.sort();
    assert_eq!(edges_a.len(), b.graph().edges().len());

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 1);
    assert_eq!(meta["treatment_effect"].as_f64().unwrap(), sim.treatment_effect);
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for run in ["a", "b"] {
        let r = umgnet(&["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().join(run).to_str().unwrap()]);
        assert!(r.status.success());
    }
    for f in listing(&dir.path().join("a")) {
        assert_eq!(fs::read(dir.path().join("a").join(&f)).unwrap(), fs::read(dir.path().join("b").join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_config_fails_before_writing_anything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[synthetic]\nusers = 10\nproducts = 5\nfeatures = 2\ndensity = 0.0\n");
    let out = dir.path().join("never");
    let r = umgnet(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    let msg = stderr(&r);
    assert!(msg.starts_with("ERROR "), "{msg}");
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
    assert!(!out.exists());
}

#[test]
fn unknown_keys_and_bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nepochz = 3\n");
    let r = umgnet(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(stderr(&r).starts_with("ERROR config:"), "{}", stderr(&r));

    let r = umgnet(&["eval", "--gnn", "gcn"]);
    assert!(!r.status.success());
    assert!(stderr(&r).starts_with("ERROR usage:"), "{}", stderr(&r));
}

#[test]
fn missing_dataset_path_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[data]\ndir = \"nowhere\"\n");
    let out = dir.path().join("out");
    let r = umgnet(&["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    let msg = stderr(&r);
    assert!(msg.starts_with("ERROR io:"), "{msg}");
    assert!(msg.contains("nowhere"), "{msg}");
    assert!(!out.exists());
}

#[test]
fn train_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), SMALL);
    let out = dir.path().join("train");
    let r = umgnet(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(listing(&out), ["model.json", "predictions.csv", "trace.jsonl"]);

    let model = checkpoint::load(&out.join("model.json")).unwrap();
    let run = RunConfig::load(&cfg).unwrap();
    let loaded = load_data(&run).unwrap();
    let labeled = loaded.dataset.labeled_users();
    let (direct, _) = train::<f32>(&loaded.dataset, &labeled, &ModelConfig { epochs: 20, seed: 3, ..ModelConfig::default() }).unwrap();
    assert_eq!(model, direct);
    assert_eq!(fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().count(), 20);
    let rows = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(rows.lines().count(), 61);
    let pred = predict(&model, &ModelInputs::new(&loaded.dataset)).unwrap();
    let first: Vec<&str> = rows.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], loaded.user_ids[0]);
    assert_eq!(first[3].parse::<f64>().unwrap(), pred.uplift[0]);
}

#[test]
fn eval_emits_one_record_per_seed_and_fold() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}[eval]\nfolds = 5\nseeds = [0, 1, 2, 3, 4]\n");
    let cfg = synth_into(dir.path(), &body);
    let out = dir.path().join("eval");
    let r = umgnet(&["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "3"]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(fs::read_to_string(out.join("records.jsonl")).unwrap().lines().count(), 25);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metadata"]["fold_plan_hashes"].as_array().unwrap().len(), 5);
    assert!(String::from_utf8_lossy(&r.stdout).contains("up@20"));
}

#[test]
fn model_and_baseline_share_fold_plans() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}[eval]\nfolds = 4\nseeds = [5, 6]\n");
    let cfg = synth_into(dir.path(), &body);
    let mut run = RunConfig::load(&cfg).unwrap();
    run.output = Some(dir.path().join("umgnet"));
    let (gnn, _) = cmd_eval(&run).unwrap();
    run.eval.model = "baseline-t".parse().unwrap();
    run.output = Some(dir.path().join("baseline"));
    let (base, _) = cmd_eval(&run).unwrap();
    assert_eq!(gnn.metadata.fold_plan_hashes, base.metadata.fold_plan_hashes);
    assert_ne!(gnn.metadata.config_hash, base.metadata.config_hash);
    assert_eq!(gnn.records.len(), base.records.len());
    for (a, b) in gnn.records.iter().zip(&base.records) {
        assert_eq!((a.seed, a.fold, a.train_size, a.eval_size, a.test_ate), (b.seed, b.fold, b.train_size, b.eval_size, b.test_ate));
    }
}

#[test]
fn policies_share_batch_sizes_and_pass_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}[active]\ninitial_fraction = 0.1\ntarget_fraction = 0.3\nrounds = 2\nclusters = 4\nmc_passes = 5\n");
    let cfg = synth_into(dir.path(), &body);
    let mut sizes = Vec::new();
    for policy in ["greedy", "random"] {
        let out = dir.path().join(policy);
        let r = umgnet(&["active", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--policy", policy]);
        assert!(r.status.success(), "{}", stderr(&r));
        assert_eq!(listing(&out), ["history.jsonl", "metrics.json", "model.json", "predictions.csv"]);
        let history: Vec<serde_json::Value> = fs::read_to_string(out.join("history.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(history.len(), 3);
        sizes.push(history.iter().map(|h| h["batch"].as_array().unwrap().len()).collect::<Vec<_>>());
    }
    assert_eq!(sizes[0], sizes[1]);

    let mut run = RunConfig::load(&cfg).unwrap();
    run.output = Some(dir.path().join("direct"));
    let (metrics, _) = cmd_active(&run).unwrap();
    assert_eq!(metrics.labeled + metrics.remainder, 60);
}

#[test]
fn equal_fractions_run_no_query_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}[active]\nclusters = 4\nmc_passes = 3\n");
    let cfg = synth_into(dir.path(), &body);
    let out = dir.path().join("active");
    let r = umgnet(&[
        "active", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--frac-initial", "0.1", "--frac-target", "0.1",
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 1);
    assert!(history.contains("\"scoring\":\"seed\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prediction_rows_round_trip(values in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6, 0.0f64..1e3), 1..20)) {
        let pred = UpliftPrediction {
            treated: values.iter().map(|v| v.0).collect(),
            control: values.iter().map(|v| v.1).collect(),
            uplift: values.iter().map(|v| v.0 - v.1).collect(),
            uncertainty: values.iter().map(|v| v.2).collect(),
        };
        let ids: Vec<String> = (0..values.len()).map(|i| format!("u{i}")).collect();
        let text = predictions_csv(&ids, &pred);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (i, row) in rdr.records().enumerate() {
            let row = row.unwrap();
            prop_assert_eq!(&row[0], ids[i].as_str());
            prop_assert_eq!(row[1].parse::<f64>().unwrap(), pred.treated[i]);
            prop_assert_eq!(row[2].parse::<f64>().unwrap(), pred.control[i]);
            prop_assert_eq!(row[3].parse::<f64>().unwrap(), pred.uplift[i]);
            prop_assert_eq!(row[4].parse::<f64>().unwrap(), pred.uncertainty[i]);
        }
    }
}
