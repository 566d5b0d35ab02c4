use std::path::Path;
use std::process::{Command, Output};

use covnet::data::load_csv;
use covnet::eval::{embed_dataset, knn_accuracy, load_embeddings_csv, topk_search, EmbeddingTable, Query};
use covnet::training::load_checkpoint;

fn covnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = covnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns its single stderr line and exit code.
fn fails(dir: &Path, args: &[&str]) -> (String, i32) {
    let out = covnet(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr was: {err}");
    (err.trim_end().to_string(), out.status.code().unwrap())
}

fn trained(dir: &Path, variant: &str) {
    ok(dir, &["gen-data", "--classes", "4", "--per-class", "40", "--dim", "8", "--seed", "3", "--out", "data"]);
    ok(dir, &["train", "--data", "data/data.csv", "--variant", variant, "--epochs", "30", "--seed", "5", "--quiet", "--out", "run"]);
}

fn checkpoint_table(dir: &Path, data: &str) -> EmbeddingTable {
    let ck = load_checkpoint(dir.join("run/checkpoint.json")).unwrap();
    let ds = load_csv(dir.join(data)).unwrap();
    let ds = ck.standardizer.as_ref().unwrap().apply(&ds).unwrap();
    embed_dataset(&ck.model().unwrap(), &ds).unwrap()
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-data", "--classes", "4", "--per-class", "200", "--dim", "20", "--seed", "7"];
    ok(dir.path(), &[&args[..], &["--out", "a"]].concat());
    ok(dir.path(), &[&args[..], &["--out", "b"]].concat());
    let a = std::fs::read(dir.path().join("a/data.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/data.csv")).unwrap());
    let ds = load_csv(dir.path().join("a/data.csv")).unwrap();
    assert_eq!(ds.len(), 800);
    assert_eq!(ds.dim(), 20);
    assert_eq!(ds.class_counts(), vec![200; 4]);
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.toml")).unwrap();
    assert!(manifest.contains("rows = 800"));
}

#[test]
fn errors_are_one_line_with_status() {
    let dir = tempfile::tempdir().unwrap();
    let (msg, code) = fails(dir.path(), &["gen-data", "--per-class", "1", "--out", "x"]);
    assert!(msg.starts_with("error: ") && msg.contains("per_class"), "{msg}");
    assert_ne!(code, 0);

    let (msg, code) = fails(dir.path(), &["train", "--data", "nope.csv", "--variant", "bogus"]);
    for name in ["covnet-v1", "covnet-v2", "covnet-v3", "siamese", "triplet", "npair"] {
        assert!(msg.contains(name), "{msg}");
    }
    assert_eq!(code, 2);

    let (msg, code) = fails(dir.path(), &["train", "--data", "missing.csv", "--quiet"]);
    assert!(msg.contains("missing.csv"), "{msg}");
    assert_eq!(code, 1);

    let (_, code) = fails(dir.path(), &["search", "--embeddings", "e.csv", "--query-id", "0", "--k", "0"]);
    assert_eq!(code, 2);

    let (_, code) = fails(dir.path(), &["eval", "--no-such-flag"]);
    assert_eq!(code, 2);

    let (msg, code) = fails(dir.path(), &["eval", "--checkpoint", "absent.json", "--data", "absent.csv"]);
    assert!(msg.contains("absent.json"), "{msg}");
    assert_eq!(code, 1);
}

#[test]
fn resolved_config_replays_to_identical_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, "covnet-v1");
    ok(d, &["train", "--config", "run/resolved_config.toml", "--quiet", "--out", "replay"]);
    for f in ["checkpoint.json", "resolved_config.toml", "train.csv", "val.csv", "test.csv"] {
        assert_eq!(
            std::fs::read(d.join("run").join(f)).unwrap(),
            std::fs::read(d.join("replay").join(f)).unwrap(),
            "{f} differs"
        );
    }
    let history = std::fs::read_to_string(d.join("run/history.jsonl")).unwrap();
    assert!(!history.is_empty() && history.lines().count() <= 30);
}

#[test]
fn eval_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, "triplet");
    ok(d, &["eval", "--checkpoint", "run/checkpoint.json", "--data", "run/test.csv", "--ks", "1,5,10", "--out", "eval"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["variant"], "triplet");
    let table = checkpoint_table(d, "run/test.csv");
    assert_eq!(report["n_samples"], table.len());
    let accs = report["accuracies"].as_array().unwrap();
    for (k, a) in [1usize, 5, 10].into_iter().zip(accs) {
        assert_eq!(a.as_f64().unwrap(), knn_accuracy(&table, k).unwrap());
    }
    let exported = load_embeddings_csv(d.join("eval/embeddings.csv")).unwrap();
    assert_eq!(exported.z(), table.z());
    assert_eq!(exported.labels(), table.labels());
}

#[test]
fn search_and_project_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, "covnet-v3");
    ok(d, &["eval", "--checkpoint", "run/checkpoint.json", "--data", "run/test.csv", "--ks", "1,10", "--out", "eval"]);
    let table = load_embeddings_csv(d.join("eval/embeddings.csv")).unwrap();

    let text = ok(d, &["search", "--embeddings", "eval/embeddings.csv", "--query-id", "3", "--k", "7"]);
    let hits = topk_search(&table, &Query::Id(3), 7).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(text.lines().next(), Some("rank,id,label,similarity,relevant"));
    assert_eq!(rows.len(), 7);
    for (r, (line, h)) in rows.iter().zip(&hits).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0].parse::<usize>().unwrap(), r + 1);
        assert_eq!(f[1].parse::<u64>().unwrap(), h.id);
        assert_eq!(f[2].parse::<i64>().unwrap(), h.label);
        assert_eq!(f[3].parse::<f64>().unwrap(), h.similarity);
        assert_eq!(f[4].parse::<bool>().ok(), h.relevant);
    }

    let via_checkpoint = ok(d, &["search", "--checkpoint", "run/checkpoint.json", "--data", "run/test.csv", "--query-id", "3", "--k", "7"]);
    assert_eq!(via_checkpoint, text);

    let q: Vec<String> = table.z().row(0).iter().map(|v| v.to_string()).collect();
    let text = ok(d, &["search", "--embeddings", "eval/embeddings.csv", "--query-vector", &q.join(","), "--k", "3"]);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[1], table.ids()[0].to_string());
    assert_eq!(first[4], "");

    ok(d, &["project", "--embeddings", "eval/embeddings.csv", "--out", "proj/points.csv"]);
    let proj = std::fs::read_to_string(d.join("proj/points.csv")).unwrap();
    let mut lines = proj.lines();
    assert_eq!(lines.next(), Some("id,label,u,v"));
    let coords: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(coords.len(), table.len());
    let n = coords.len() as f64;
    assert!((coords.iter().map(|c| c.0).sum::<f64>() / n).abs() < 1e-12);
    assert!((coords.iter().map(|c| c.1).sum::<f64>() / n).abs() < 1e-12);
}
