use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        f.write(
            "vectors.txt",
            "8 1\ncat 0.0\ndog 0.3\npuppy 0.35\ncar 4.0\nbus 4.2\ntruck 4.4\no 10.0\np 10.1\n",
        );
        f.write(
            "corpus.jsonl",
            concat!(
                "{\"id\": \"a\", \"label\": \"pet\", \"text\": \"cat dog\"}\n",
                "{\"id\": \"b\", \"label\": \"pet\", \"text\": \"dog puppy\"}\n",
                "{\"id\": \"c\", \"label\": \"pet\", \"text\": \"cat\"}\n",
                "{\"id\": \"d\", \"label\": \"veh\", \"text\": \"car bus\"}\n",
                "{\"id\": \"e\", \"label\": \"veh\", \"text\": \"truck bus\"}\n",
                "{\"id\": \"f\", \"label\": \"veh\", \"text\": \"car\"}\n",
            ),
        );
        f.write(
            "test.jsonl",
            "{\"id\": \"t1\", \"label\": \"pet\", \"text\": \"puppy cat\"}\n{\"id\": \"t2\", \"label\": \"veh\", \"text\": \"truck\"}\n",
        );
        f
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }
}

fn wfrdoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfrdoc"))
        .args(args)
        .env_remove("WFRDOC_FORMAT")
        .env_remove("WFRDOC_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn exists(p: &str) -> bool {
    Path::new(p).exists()
}

#[test]
fn dist_of_identical_files_is_small() {
    let f = Fixture::new();
    let doc = f.write("doc.txt", "cat dog dog");
    let doc = doc.to_str().unwrap();
    let v = json(&wfrdoc(&["dist", "--embeddings", &f.path("vectors.txt"), doc, doc]));
    assert!(v["distance"].as_f64().unwrap() <= 0.05);
    assert_eq!(v["stage_trace"].as_array().unwrap().len(), 5);
}

#[test]
fn dist_accepts_inline_text_and_csv() {
    let f = Fixture::new();
    let out = wfrdoc(&["--format", "csv", "dist", "--embeddings", &f.path("vectors.txt"), "cat", "car"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("distance,primal,dual,gap"));
    let distance: f64 = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    // nothing is transported: η²·2·(1 + 1)
    assert!((distance - 2.0).abs() < 1e-9);
}

#[test]
fn dist_of_empty_document_exits_2() {
    let f = Fixture::new();
    let empty = f.write("empty.txt", "");
    let out = wfrdoc(&["dist", "--embeddings", &f.path("vectors.txt"), empty.to_str().unwrap(), "cat"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_embeddings_file_is_an_input_error() {
    let out = wfrdoc(&["dist", "--embeddings", "/nonexistent/vectors.txt", "cat", "dog"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn topk_pruned_matches_exhaustive() {
    let f = Fixture::new();
    let base = ["topk", "--embeddings", &f.path("vectors.txt"), "--corpus", &f.path("corpus.jsonl"), "--query", "dog cat", "--k", "3"];
    let pruned = json(&wfrdoc(&base));
    let mut args = base.to_vec();
    args.push("--exhaustive");
    let exhaustive = json(&wfrdoc(&args));
    assert_eq!(pruned["hits"], exhaustive["hits"]);
    let ids: Vec<&str> = pruned["hits"].as_array().unwrap().iter().map(|h| h["id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|id| ["a", "b", "c"].contains(id)));
}

#[test]
fn topk_with_large_k_returns_the_whole_corpus() {
    let f = Fixture::new();
    let out = wfrdoc(&["topk", "--embeddings", &f.path("vectors.txt"), "--corpus", &f.path("corpus.jsonl"), "--query", "bus", "--k", "50"]);
    let v = json(&out);
    assert_eq!(v["hits"].as_array().unwrap().len(), 6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn topk_by_wmd_and_index_cache() {
    let f = Fixture::new();
    let cache = f.path("index.bin");
    let args = [
        "topk", "--embeddings", &f.path("vectors.txt"), "--corpus", &f.path("corpus.jsonl"),
        "--query", "car", "--k", "1", "--metric", "wmd", "--index-cache", &cache,
    ];
    let first = json(&wfrdoc(&args));
    assert!(exists(&cache));
    let second = json(&wfrdoc(&args));
    assert_eq!(first, second);
    assert_eq!(first["metric"], "wmd");
    assert_eq!(first["hits"][0]["id"], "f");
}

#[test]
fn knn_separates_the_clusters() {
    let f = Fixture::new();
    let v = json(&wfrdoc(&[
        "knn", "--embeddings", &f.path("vectors.txt"), "--train", &f.path("corpus.jsonl"), "--test", &f.path("test.jsonl"), "--k", "1",
    ]));
    assert_eq!(v["error_rate"].as_f64(), Some(0.0));
    assert_eq!(v["total"].as_u64(), Some(2));
}

#[test]
fn knn_cross_validation_is_deterministic() {
    let f = Fixture::new();
    let args = [
        "knn", "--embeddings", &f.path("vectors.txt"), "--train", &f.path("corpus.jsonl"), "--test", &f.path("test.jsonl"),
        "--cv", "--folds", "3",
    ];
    let a = json(&wfrdoc(&args));
    let b = json(&wfrdoc(&args));
    assert_eq!(a, b);
    assert_eq!(a["error_rate"].as_f64(), Some(0.0));
    assert_eq!(a["cross_validation"]["best_k"].as_u64(), Some(1));
}

#[test]
fn knn_without_k_or_cv_is_a_usage_error() {
    let f = Fixture::new();
    let out = wfrdoc(&["knn", "--embeddings", &f.path("vectors.txt"), "--train", &f.path("corpus.jsonl"), "--test", &f.path("test.jsonl")]);
    assert_eq!(out.status.code(), Some(2));
}

fn pr_fixture(f: &Fixture, labels: [u8; 4]) -> String {
    // WMD between single words is their distance, so scores are 0.1..0.4
    f.write("line.txt", "5 1\no 0.0\nwa 0.1\nwb 0.2\nwc 0.3\nwd 0.4\n");
    let pairs: String = labels
        .iter()
        .enumerate()
        .map(|(k, l)| format!("{{\"id\": \"p{k}\", \"concept_text\": \"o\", \"project_text\": \"w{}\", \"label\": {l}}}\n", (b'a' + k as u8) as char))
        .collect();
    f.write("pairs.jsonl", &pairs).to_string_lossy().into_owned()
}

#[test]
fn prcurve_contains_the_hand_counted_point() {
    let f = Fixture::new();
    let pairs = pr_fixture(&f, [1, 1, 0, 1]);
    let out_path = f.path("curve.csv");
    let out = wfrdoc(&[
        "--format", "csv", "prcurve", "--embeddings", &f.path("line.txt"), "--pairs", &pairs, "--metric", "wmd", "--output", &out_path,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best F1"));
    let mut reader = csv::Reader::from_path(&out_path).unwrap();
    let rows: Vec<(f64, f64, f64)> = reader.deserialize().map(|r| r.unwrap()).collect();
    assert!(rows
        .iter()
        .any(|&(t, p, r)| t > 0.2 && t < 0.3 && p == 1.0 && (r - 2.0 / 3.0).abs() < 1e-12));
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 && w[0].2 <= w[1].2));
}

#[test]
fn prcurve_without_positives_exits_2() {
    let f = Fixture::new();
    let pairs = pr_fixture(&f, [0, 0, 0, 0]);
    let out = wfrdoc(&["prcurve", "--embeddings", &f.path("line.txt"), "--pairs", &pairs]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthetic_demo_reports_the_flip() {
    let out = wfrdoc(&["demo", "--synthetic"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().last(),
        Some("WFR(B,C) < WFR(A,B): true; WMD(A,B) < WMD(B,C): true")
    );

    let v = json(&wfrdoc(&["demo", "--synthetic", "--json"]));
    assert_eq!(v["eta"].as_f64(), Some(0.5));
}

#[test]
fn demo_without_a_source_exits_2() {
    assert_eq!(wfrdoc(&["demo"]).status.code(), Some(2));
}

#[test]
fn format_can_come_from_the_environment() {
    let f = Fixture::new();
    let out = Command::new(env!("CARGO_BIN_EXE_wfrdoc"))
        .args(["dist", "--embeddings", &f.path("vectors.txt"), "cat", "dog"])
        .env("WFRDOC_FORMAT", "csv")
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("distance,"));
}

#[test]
fn bad_schedule_is_rejected() {
    let f = Fixture::new();
    let out = wfrdoc(&["--schedule", "0.1:10,0.5:10", "dist", "--embeddings", &f.path("vectors.txt"), "cat", "dog"]);
    assert_eq!(out.status.code(), Some(2));
}
