//! End-to-end runs of the `scamsweeper` binary on a small synthetic graph.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use scamsweeper::binfmt;
use scamsweeper::hashing::graph_hash;
use tempfile::{tempdir, TempDir};

const CONFIG: &str = r#"
seed = 3

[synth]
n_accounts = 500
phishing_count = 15
scam_count = 15
decoy_count = 30

[walk]
walks_per_node = 3
max_intervals = 8

[model]
hidden = 16
d_model = 16
blocks = 1
m_max = 8

[train]
epochs = 5
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scamsweeper")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the parsed JSON error line.
fn fails(dir: &Path, args: &[&str]) -> (i32, serde_json::Value) {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap_or_default();
    let json: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON error line: {stderr}"));
    (out.status.code().unwrap(), json)
}

/// Workspace with config, synthetic data and walks already produced.
fn prepared() -> TempDir {
    let dir = tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.toml"), CONFIG).unwrap();
    ok(d, &["synth", "--config", "cfg.toml", "--out", "data"]);
    ok(d, &["sample", "--config", "cfg.toml", "--graph", "data/graph.ssgr", "--out", "data"]);
    dir
}

#[test]
fn smoke_pipeline() {
    let start = Instant::now();
    let dir = prepared();
    let d = dir.path();
    for f in ["transactions.csv", "labels.csv", "motifs.jsonl", "graph.ssgr", "walks.jsonl", "synth.manifest.json", "sample.manifest.json"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    let table = ok(d, &["ingest", "--config", "cfg.toml", "--transactions", "data/transactions.csv", "--labels", "data/labels.csv", "--out", "ingested"]);
    assert!(table.contains("phishing") && table.contains("scam"), "{table}");
    let ingested = binfmt::load(&d.join("ingested/graph.ssgr")).unwrap();
    let generated = binfmt::load(&d.join("data/graph.ssgr")).unwrap();
    assert_eq!(graph_hash(&ingested), graph_hash(&generated));

    let table = ok(d, &["train", "--config", "cfg.toml", "--graph", "data/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "run"]);
    assert!(table.contains("weighted"), "{table}");
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run/metrics.json")).unwrap()).unwrap();
    let curve: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run/loss_curve.json")).unwrap()).unwrap();
    let epochs = curve["epochs"].as_array().unwrap();
    assert!(!epochs.is_empty() && epochs.len() <= 5);
    assert!(epochs.iter().all(|e| e["loss"].as_f64().unwrap().is_finite()));

    ok(d, &["eval", "--config", "cfg.toml", "--checkpoint", "run/model.ssck", "--graph", "data/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "eval"]);
    let eval: serde_json::Value = serde_json::from_slice(&fs::read(d.join("eval/eval_metrics.json")).unwrap()).unwrap();
    assert_eq!(eval["weighted_f1"], metrics["weighted_f1"]);
    assert_eq!(eval["confusion"], metrics["confusion"]);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run/train.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert!(start.elapsed().as_secs() < 300);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = prepared();
    let d = dir.path();
    let args = ["train", "--config", "cfg.toml", "--graph", "data/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "run"];
    ok(d, &args);
    let first = fs::read(d.join("run/metrics.json")).unwrap();
    let first_model = fs::read(d.join("run/model.ssck")).unwrap();
    let first_manifest: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run/train.manifest.json")).unwrap()).unwrap();
    ok(d, &args);
    assert_eq!(fs::read(d.join("run/metrics.json")).unwrap(), first);
    assert_eq!(fs::read(d.join("run/model.ssck")).unwrap(), first_model);
    let second: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run/train.manifest.json")).unwrap()).unwrap();
    assert_eq!(second["manifest_hash"], first_manifest["manifest_hash"]);

    let other = tempdir().unwrap();
    fs::write(other.path().join("cfg.toml"), CONFIG).unwrap();
    ok(other.path(), &["synth", "--config", "cfg.toml", "--out", "data"]);
    for f in ["transactions.csv", "labels.csv", "motifs.jsonl", "graph.ssgr"] {
        assert!(fs::read(other.path().join("data").join(f)).unwrap() == fs::read(d.join("data").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn error_exit_codes() {
    let dir = prepared();
    let d = dir.path();

    let (code, err) = fails(d, &["sample", "--config", "cfg.toml", "--graph", "nope.ssgr", "--out", "x"]);
    assert_eq!((code, err["error"].as_str().unwrap(), err["command"].as_str().unwrap()), (2, "missing_file", "sample"));
    assert_eq!(fails(d, &["synth", "--config", "missing.toml"]).0, 2);

    fs::write(d.join("bad.toml"), "[synth]\nphishing = 3\n").unwrap();
    assert_eq!(fails(d, &["synth", "--config", "bad.toml", "--out", "x"]).0, 3);
    fs::write(d.join("infeasible.toml"), "[synth]\nn_accounts = 10\nphishing_count = 20\n").unwrap();
    assert_eq!(fails(d, &["synth", "--config", "infeasible.toml", "--out", "x"]).0, 3);
    assert_eq!(fails(d, &["synth", "--structural-window", "0", "--out", "x"]).0, 3);

    fs::write(d.join("bad.csv"), "from,to,value,timestamp,block\n0x1,0x2,ten,5,1\n").unwrap();
    let (code, err) = fails(d, &["ingest", "--transactions", "bad.csv", "--out", "x"]);
    assert_eq!(code, 4);
    assert!(err["message"].as_str().unwrap().contains("line 2"));
    fs::write(d.join("junk.ssgr"), b"not a graph").unwrap();
    assert_eq!(fails(d, &["sample", "--graph", "junk.ssgr", "--out", "x"]).0, 4);

    // Walks sampled with a different structural window are stale for this config.
    assert_eq!(fails(d, &["train", "--config", "cfg.toml", "--structural-window", "5", "--graph", "data/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "x"]).0, 3);
    // Walks from another graph do not match it.
    ok(d, &["synth", "--config", "cfg.toml", "--seed", "4", "--out", "other"]);
    assert_eq!(fails(d, &["train", "--config", "cfg.toml", "--graph", "other/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "x"]).0, 4);
    assert!(!d.join("x").join("metrics.json").exists());
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["train", "--config", "cfg.toml", "--graph", "data/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "run"]);
    fs::write(d.join("wide.toml"), CONFIG.replace("hidden = 16", "hidden = 8")).unwrap();
    let (code, err) = fails(d, &["eval", "--config", "wide.toml", "--checkpoint", "run/model.ssck", "--graph", "data/graph.ssgr", "--walks", "data/walks.jsonl", "--out", "eval"]);
    assert_eq!((code, err["command"].as_str().unwrap()), (3, "eval"));
    assert!(!d.join("eval").exists() || fs::read_dir(d.join("eval")).unwrap().next().is_none());
}
