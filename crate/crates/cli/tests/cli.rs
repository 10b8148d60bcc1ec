//! The `nelec` binary driven end to end on the bundled fixture.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn nelec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nelec")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = nelec(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Last stderr line parsed as the JSON error document.
fn error_doc(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn train_args<'a>(out: &'a str, conv: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--train", conv, "--min-doc-freq", "1", "--rounds", "5", "--out", out];
    v.extend_from_slice(extra);
    v
}

#[test]
fn help_and_version_exit_zero() {
    assert!(nelec(&["--help"]).status.success());
    assert!(nelec(&["--version"]).status.success());
    let help = String::from_utf8(nelec(&["train", "--help"]).stdout).unwrap();
    assert!(help.contains("--include-dev"));
}

#[test]
fn usage_errors_exit_one_with_json() {
    let out = nelec(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_doc(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let out_dir = dir.path().join("m");
    let out = nelec(&["train", "--train", s(&conv), "--vad", "/missing/vad.tsv", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    let doc = error_doc(&out);
    assert!(doc["message"].as_str().unwrap().contains("/missing/vad.tsv"));
    assert!(!out_dir.exists(), "nothing is written when the config is rejected");
}

#[test]
fn malformed_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "1\tonly two\n").unwrap();
    let out = nelec(&["stats", "--input", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert_eq!(error_doc_from(&stderr)["exit_code"], 2);
}

fn error_doc_from(stderr: &str) -> Value {
    serde_json::from_str(stderr.trim()).unwrap()
}

#[test]
fn stats_match_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats");
    ok(&[
        "stats",
        "--input",
        s(&fixture("conversations.tsv")),
        "--vocab",
        s(&fixture("vocab.txt")),
        "--out",
        s(&out),
    ]);
    let got = &json(&out.join("stats.json"))[0]["stats"];
    let want = json(&fixture("reference_stats.json"));
    assert_eq!(got["example_count"], want["example_count"]);
    assert_eq!(got["token_count"], want["token_count"]);
    for key in ["emoji_pct", "oov_pct", "avg_length"] {
        let (g, w) = (got[key].as_f64().unwrap(), want[key].as_f64().unwrap());
        assert!((g - w).abs() < 1e-9, "{key}: {g} vs {w}");
    }
    assert!(out.join("manifest.json").exists());
}

#[test]
fn train_dev_concatenation_counts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("conversations.tsv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let train = dir.path().join("train.tsv");
    let dev = dir.path().join("dev.tsv");
    std::fs::write(&train, lines[..41].join("\n") + "\n").unwrap();
    std::fs::write(&dev, lines[41..].join("\n") + "\n").unwrap();
    let out = dir.path().join("m");
    ok(&train_args(s(&out), s(&train), &["--dev", s(&dev), "--include-dev"]));
    let manifest = json(&out.join("manifest.json"));
    let rows = |role: &str| {
        manifest["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .find(|i| i["role"] == role)
            .unwrap()["rows"]
            .as_u64()
            .unwrap()
    };
    assert_eq!((rows("train"), rows("dev")), (40, 20));
    assert_eq!(manifest["total_rows"], 60);
    assert_eq!(manifest["seed"], 0);
    assert!(!out.join("dev_report.json").exists(), "dev was used for training");
}

#[test]
fn overlapping_ids_across_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let out = nelec(&train_args(s(&dir.path().join("m")), s(&conv), &["--dev", s(&conv), "--include-dev"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_identical_labels_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let text = std::fs::read_to_string(&conv).unwrap();
    let pred: String = text
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            format!("{}\t{}\n", c[0], c[4])
        })
        .collect();
    let pred_path = dir.path().join("pred.tsv");
    std::fs::write(&pred_path, format!("id\tlabel\n{pred}")).unwrap();
    let out = dir.path().join("e");
    ok(&["evaluate", "--gold", s(&conv), "--pred", s(&pred_path), "--out", s(&out)]);
    assert_eq!(json(&out.join("report.json"))["micro"]["f1"], 1.0);

    std::fs::write(&pred_path, "0\thappy\n").unwrap();
    let out = nelec(&["evaluate", "--gold", s(&conv), "--pred", s(&pred_path), "--out", s(&out)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_is_repeatable_and_schema_valid() {
    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let model = dir.path().join("m");
    ok(&train_args(s(&model), s(&conv), &["--scores", s(&fixture("scores.tsv"))]));
    let mut files = Vec::new();
    for run in ["p1", "p2"] {
        let out = dir.path().join(run);
        ok(&["predict", "--model-dir", s(&model), "--input", s(&conv), "--out", s(&out)]);
        files.push(std::fs::read_to_string(out.join("predictions.tsv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let lines: Vec<&str> = files[0].lines().collect();
    assert_eq!(lines[0], "id\tlabel");
    assert_eq!(lines.len(), 61);
    for (i, line) in lines[1..].iter().enumerate() {
        let (id, label) = line.split_once('\t').unwrap();
        assert_eq!(id, i.to_string());
        assert!(["happy", "sad", "angry", "others"].contains(&label), "{label}");
    }
}

#[test]
fn predict_without_score_file_for_input_fails_as_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let model = dir.path().join("m");
    ok(&train_args(s(&model), s(&conv), &["--scores", s(&fixture("scores.tsv"))]));
    let other = dir.path().join("other.tsv");
    std::fs::write(&other, "zz\ta\tb\tc\n").unwrap();
    let out = nelec(&["predict", "--model-dir", s(&model), "--input", s(&other), "--out", s(&dir.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_doc(&out)["message"].as_str().unwrap().contains("zz"));
}

#[test]
fn tune_then_predict_with_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let model = dir.path().join("m");
    ok(&train_args(s(&model), s(&conv), &["--dev", s(&conv)]));
    assert!(model.join("dev_report.json").exists());
    let tuned = dir.path().join("t");
    ok(&["tune-thresholds", "--model-dir", s(&model), "--step", "0.05", "--out", s(&tuned)]);
    let report = json(&tuned.join("tune_report.json"));
    assert!(report["tuned_f1"].as_f64().unwrap() >= report["zero_thresholds_f1"].as_f64().unwrap());
    let th = tuned.join("thresholds.json");
    let pred = dir.path().join("p");
    ok(&["predict", "--model-dir", s(&model), "--input", s(&conv), "--thresholds", s(&th), "--out", s(&pred)]);
    let eval = dir.path().join("e");
    ok(&["evaluate", "--gold", s(&conv), "--pred", s(&pred.join("predictions.tsv")), "--out", s(&eval)]);
    let f1 = json(&eval.join("report.json"))["micro"]["f1"].as_f64().unwrap();
    assert!((f1 - report["tuned_f1"].as_f64().unwrap()).abs() < 1e-12);

    let out = nelec(&["tune-thresholds", "--model-dir", s(&model), "--step", "0", "--out", s(&tuned)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_reports_nine_additive_rows() {
    let dir = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let out = dir.path().join("a");
    ok(&[
        "ablate", "--train", s(&conv), "--eval", s(&conv), "--min-doc-freq", "1", "--rounds", "3", "--out", s(&out),
    ]);
    let table = json(&out.join("ablation.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    let full = table["full"]["kept_features"].as_u64().unwrap();
    for r in rows {
        let kept = r["kept_features"].as_u64().unwrap();
        let dropped = r["dropped_features"].as_u64().unwrap();
        assert_eq!(kept + dropped, full, "{}", r["name"]);
    }
    let dense: u64 = ["-vad", "-emolex", "-neural", "-counts"]
        .iter()
        .map(|n| rows.iter().find(|r| r["name"] == *n).unwrap()["dropped_features"].as_u64().unwrap())
        .sum();
    assert_eq!(dense, 81);
    assert!(std::fs::read_to_string(out.join("ablation.txt")).unwrap().contains("-turns1+2"));
}

#[test]
fn nothing_is_written_outside_the_output_directory() {
    let work = tempfile::tempdir().unwrap();
    let conv = fixture("conversations.tsv");
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_nelec"))
            .args(args)
            .current_dir(work.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&train_args("m", s(&conv), &["--score-source", "stub", "--emolex", s(&fixture("emolex.tsv"))]));
    run(&["predict", "--model-dir", "m", "--input", s(&conv), "--out", "p"]);
    run(&["stats", "--input", s(&conv), "--out", "s"]);
    let mut entries: Vec<String> = std::fs::read_dir(work.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    assert_eq!(entries, ["m", "p", "s"]);
}

#[test]
fn config_file_paths_resolve_relative_to_it_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("conversations.tsv"), dir.path().join("train.tsv")).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\n[data]\ntrain = [\"train.tsv\"]\n[features]\nmin_doc_freq = 1\n[gbdt]\nrounds = 2\n",
    )
    .unwrap();
    let out = dir.path().join("m");
    ok(&["train", "--config", s(&cfg), "--seed", "9", "--model", "logreg", "--out", s(&out)]);
    let saved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 9"));
    assert!(saved.contains(&format!("{:?}", dir.path().join("train.tsv").display().to_string())));
    assert_eq!(json(&out.join("model.json"))["kind"], "logreg");

    std::fs::write(&cfg, "[gbdt]\nrounds = \"many\"\n").unwrap();
    assert_eq!(nelec(&["train", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(1));
}
