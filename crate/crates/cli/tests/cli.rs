use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use delineate_core::ingest::write_records;
use delineate_core::records::{PublicationRecord, Source};
use delineate_core::synth::planted_duplicates;
use serde_json::{json, Value};
use tempfile::TempDir;

fn delineate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delineate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = delineate(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_lines(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, text).unwrap();
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// File names in `dir`, sorted; asserts exactly one manifest is present.
fn outputs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.iter().filter(|n| *n == "manifest.json").count(), 1, "{names:?}");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    for name in names.iter().filter(|n| *n != "manifest.json") {
        assert!(listed.contains(&name.as_str()), "{name} missing from manifest");
    }
    names
}

/// 100 labeled records: half cs.AI with AI wording, half math.CO without.
fn labeled_corpus(dir: &Path) -> PathBuf {
    let lines: Vec<Value> = (0..100)
        .map(|i| {
            let relevant = i % 2 == 0;
            json!({
                "id": format!("1801.{i:05}"),
                "title": if relevant { format!("Deep learning for task {i}") } else { format!("Graph colouring bound {i}") },
                "abstract": if relevant { "We train a neural network with reinforcement learning." } else { "We prove a combinatorial identity." },
                "categories": if relevant { "cs.AI" } else { "math.CO" },
                "year": 2018,
            })
        })
        .collect();
    let path = dir.join("corpus.jsonl");
    write_lines(&path, &lines);
    path
}

#[test]
fn split_is_80_10_10_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let corpus = labeled_corpus(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["split", "--corpus", p(&corpus), "--seed", "7", "--out", p(&a)]);
    ok(&["split", "--corpus", p(&corpus), "--seed", "7", "--out", p(&b)]);

    let rows = read_jsonl(&a.join("split.jsonl"));
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(r["partition"].as_str().unwrap().to_string()).or_default() += 1;
    }
    assert_eq!(counts, BTreeMap::from([("dev".into(), 10), ("test".into(), 10), ("train".into(), 80)]));
    assert_eq!(fs::read(a.join("split.jsonl")).unwrap(), fs::read(b.join("split.jsonl")).unwrap());
    assert_eq!(fs::read(a.join("strata.csv")).unwrap(), fs::read(b.join("strata.csv")).unwrap());
    assert_eq!(outputs(&a), ["manifest.json", "split.jsonl", "strata.csv"]);
}

#[test]
fn missing_input_exits_2_and_names_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let out = delineate(&["split", "--corpus", p(&missing), "--seed", "1", "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.jsonl"), "{err}");
    assert!(err.starts_with("error["), "{err}");
}

#[test]
fn keyword_model_then_predict() {
    let tmp = TempDir::new().unwrap();
    let model_dir = tmp.path().join("model");
    ok(&["train", "--method", "keywords", "--seed", "0", "--out", p(&model_dir)]);
    assert_eq!(outputs(&model_dir), ["manifest.json", "model.json"]);

    let corpus = tmp.path().join("three.jsonl");
    write_lines(
        &corpus,
        &[
            json!({"id": "a", "title": "Face recognition with deep learning", "categories": "cs.CV", "year": 2019}),
            json!({"id": "b", "title": "Cohomology of schemes", "categories": "math.AG", "year": 2019}),
            json!({"id": "c", "abstract": "A self-driving car stack.", "categories": "cs.RO", "year": 2017}),
        ],
    );
    let pred_dir = tmp.path().join("pred");
    ok(&[
        "predict",
        "--model",
        p(&model_dir.join("model.json")),
        "--corpus",
        p(&corpus),
        "--out",
        p(&pred_dir),
    ]);
    assert_eq!(outputs(&pred_dir), ["manifest.json", "predictions.jsonl"]);
    let preds = read_jsonl(&pred_dir.join("predictions.jsonl"));
    assert_eq!(preds.len(), 3);
    let labels: Vec<bool> = preds.iter().map(|v| v["label"].as_bool().unwrap()).collect();
    assert_eq!(labels, [true, false, true]);
    for v in &preds {
        let s = v["score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert!(v["hits"].is_array());
    }
    let hits: Vec<&str> = preds[0]["hits"].as_array().unwrap().iter().map(|h| h.as_str().unwrap()).collect();
    assert!(hits.contains(&"fac* recognition") && hits.contains(&"deep learning"), "{hits:?}");
}

#[test]
fn lexicon_forest_writes_cv_table_and_predicts() {
    let tmp = TempDir::new().unwrap();
    let corpus = labeled_corpus(tmp.path());
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"axes": {"n_trees": [5, 10], "max_depth": [null]}, "folds": 3}"#).unwrap();
    let model_dir = tmp.path().join("forest");
    let out = ok(&[
        "train",
        "--method",
        "lexicon_forest",
        "--seed",
        "3",
        "--corpus",
        p(&corpus),
        "--grid",
        p(&grid),
        "--out",
        p(&model_dir),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("placeholder"));
    assert_eq!(outputs(&model_dir), ["cv_table.csv", "manifest.json", "model.json"]);
    let cv = fs::read_to_string(model_dir.join("cv_table.csv")).unwrap();
    assert_eq!(cv.lines().count(), 1 + 2);

    let pred_dir = tmp.path().join("pred");
    ok(&[
        "predict",
        "--model",
        p(&model_dir.join("model.json")),
        "--corpus",
        p(&corpus),
        "--out",
        p(&pred_dir),
    ]);
    let preds = read_jsonl(&pred_dir.join("predictions.jsonl"));
    assert_eq!(preds.len(), 100);
    assert!(preds.iter().all(|v| (0.0..=1.0).contains(&v["score"].as_f64().unwrap())));
}

#[test]
fn embedding_ids_must_cover_corpus() {
    let tmp = TempDir::new().unwrap();
    let corpus = labeled_corpus(tmp.path());
    let emb = tmp.path().join("emb.jsonl");
    write_lines(&emb, &[json!({"id": "unrelated", "vector": [0.1, 0.2]})]);
    let out = delineate(&[
        "train",
        "--method",
        "embedding_linear",
        "--seed",
        "1",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--out",
        p(&tmp.path().join("lin")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MissingEmbedding"));
}

#[test]
fn embedding_linear_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let corpus = labeled_corpus(tmp.path());
    let emb = tmp.path().join("emb.jsonl");
    let mut lines = vec![json!({"manifest": {"text_fields": "title+abstract", "encoder": "test"}})];
    for i in 0..100 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        lines.push(json!({"id": format!("1801.{i:05}"), "vector": [sign * (1.0 + i as f64 / 100.0), 0.3]}));
    }
    write_lines(&emb, &lines);
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"axes": {"l2": [0.001, 0.1]}, "folds": 3}"#).unwrap();
    let model_dir = tmp.path().join("lin");
    ok(&[
        "train",
        "--method",
        "embedding_linear",
        "--seed",
        "1",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--grid",
        p(&grid),
        "--out",
        p(&model_dir),
    ]);
    let pred_dir = tmp.path().join("pred");
    ok(&[
        "predict",
        "--model",
        p(&model_dir.join("model.json")),
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--out",
        p(&pred_dir),
    ]);
    let preds = read_jsonl(&pred_dir.join("predictions.jsonl"));
    let correct = preds
        .iter()
        .filter(|v| {
            let i: usize = v["id"].as_str().unwrap()[5..].parse().unwrap();
            v["label"].as_bool().unwrap() == i.is_multiple_of(2)
        })
        .count();
    assert_eq!(correct, 100);
}

#[test]
fn evaluate_perfect_predictions() {
    let tmp = TempDir::new().unwrap();
    let corpus = labeled_corpus(tmp.path());
    let preds = tmp.path().join("perfect.jsonl");
    let lines: Vec<Value> = (0..100)
        .map(|i| json!({"id": format!("1801.{i:05}"), "label": i % 2 == 0, "score": if i % 2 == 0 { 1.0 } else { 0.0 }}))
        .collect();
    write_lines(&preds, &lines);
    let out_dir = tmp.path().join("eval");
    let out = ok(&[
        "evaluate",
        "--predictions",
        &format!("perfect={}", p(&preds)),
        "--corpus",
        p(&corpus),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(outputs(&out_dir), ["f1_by_year.csv", "manifest.json", "report_perfect.txt"]);
    let report = fs::read_to_string(out_dir.join("report_perfect.txt")).unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains(&report));
    for row in report.lines().filter(|l| l.starts_with("All") || l.starts_with("2018")) {
        let cells: Vec<&str> = row.split_whitespace().collect();
        let metrics: Vec<&str> = [1, 2, 3, 5, 6, 7, 9].iter().map(|&i| cells[i]).collect();
        assert!(metrics.iter().all(|m| *m == "1.00"), "{row}");
    }

    let csv_dir = tmp.path().join("eval_csv");
    ok(&[
        "evaluate",
        "--predictions",
        &format!("perfect={}", p(&preds)),
        "--corpus",
        p(&corpus),
        "--out",
        p(&csv_dir),
        "--format",
        "csv",
    ]);
    assert_eq!(outputs(&csv_dir), ["f1_by_year.csv", "manifest.json", "report_perfect.csv"]);
}

#[test]
fn crosstab_reports_field_shares() {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("mag.jsonl");
    write_lines(
        &corpus,
        &[
            json!({"id": 1, "title": "x", "field_scores": {"Computer vision": 0.9}}),
            json!({"id": 2, "title": "y", "field_scores": {"Computer vision": 0.4, "Botany": 0.2}}),
            json!({"id": 3, "title": "z", "field_scores": {"Botany": 0.7}}),
        ],
    );
    let preds = tmp.path().join("kw.jsonl");
    write_lines(
        &preds,
        &[
            json!({"id": "1", "label": true, "score": 1.0}),
            json!({"id": "2", "label": false, "score": 0.0}),
            json!({"id": "3", "label": false, "score": 0.0}),
        ],
    );
    let out_dir = tmp.path().join("xt");
    ok(&["crosstab", "--predictions", p(&preds), "--corpus", p(&corpus), "--out", p(&out_dir)]);
    assert_eq!(outputs(&out_dir), ["crosstab.txt", "manifest.json"]);
    let text = fs::read_to_string(out_dir.join("crosstab.txt")).unwrap();
    let cv = text.lines().find(|l| l.starts_with("Computer vision")).unwrap();
    assert_eq!(cv.split_whitespace().collect::<Vec<_>>(), ["Computer", "vision", "2", "50"]);
    let botany = text.lines().find(|l| l.starts_with("Botany")).unwrap();
    assert_eq!(botany.split_whitespace().collect::<Vec<_>>(), ["Botany", "2", "0"]);
}

#[test]
fn dedup_recovers_planted_clusters() {
    let tmp = TempDir::new().unwrap();
    let planted = planted_duplicates(300, 60, 5);
    let mut by_source: BTreeMap<Source, Vec<&PublicationRecord>> = BTreeMap::new();
    for r in &planted.records {
        by_source.entry(r.source).or_default().push(r);
    }
    let mut args: Vec<String> = vec!["dedup".into(), "--input".into()];
    for (source, recs) in &by_source {
        let path = tmp.path().join(format!("{source}.jsonl"));
        let mut buf = Vec::new();
        write_records(&mut buf, recs.iter().copied()).unwrap();
        fs::write(&path, buf).unwrap();
        args.push(format!("{source}={}", path.display()));
    }
    let out_dir = tmp.path().join("dedup");
    args.extend(["--out".into(), out_dir.display().to_string(), "--max-in-memory".into(), "50".into()]);
    let spill = tmp.path().join("spill");
    fs::create_dir(&spill).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_delineate"))
        .args(&args)
        .env("DELINEATE_SPILL_DIR", &spill)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(&spill).unwrap().count(), 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["counts"]["spilled_runs"].as_u64().unwrap() > 0, "{manifest}");
    assert_eq!(outputs(&out_dir), ["clusters.jsonl", "crosswalk.csv", "manifest.json"]);

    let mut got: Vec<Vec<String>> = read_jsonl(&out_dir.join("clusters.jsonl"))
        .iter()
        .map(|c| {
            c["member_ids"]
                .as_array()
                .unwrap()
                .iter()
                .map(|m| m.as_str().unwrap().to_string())
                .collect()
        })
        .collect();
    got.sort();
    assert_eq!(got, planted.clusters);

    let crosswalk = fs::read_to_string(out_dir.join("crosswalk.csv")).unwrap();
    assert_eq!(crosswalk.lines().next(), Some("member_id,canonical_id"));
    assert_eq!(crosswalk.lines().count(), 1 + planted.records.len());
}

#[test]
fn duplicate_ids_across_inputs_are_data_errors() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a.jsonl"), tmp.path().join("b.jsonl"));
    write_lines(&a, &[json!({"id": "x1", "title": "t"})]);
    write_lines(&b, &[json!({"id": "x1", "title": "t"})]);
    let out = delineate(&[
        "dedup",
        "--input",
        &format!("wos={}", p(&a)),
        &format!("mag={}", p(&b)),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_usage_exits_2() {
    let out = delineate(&["train", "--method", "nonsense", "--seed", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}
