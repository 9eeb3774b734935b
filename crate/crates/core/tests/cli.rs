use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mida(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mida")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mida(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small synthetic corpus in a fresh directory.
fn corpus(seed: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out-dir", p(&data), "--n-users", "200", "--n-reports", "300", "--seed", seed]);
    (dir, data)
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let files = [data.join("reports.csv"), data.join("tweets.csv"), data.join("labels.csv")];
    let mut args = vec!["train", "--reports", p(&files[0]), "--tweets", p(&files[1]), "--labels", p(&files[2])];
    args.extend(["--out", p(out)]);
    args.extend_from_slice(extra);
    ok(&args)
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap_or_else(|_| panic!("not a JSON line: {line}"));
    assert!(v["message"].is_string());
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn help_exits_zero_and_unknown_flag_exits_two() {
    assert_eq!(mida(&["--help"]).status.code(), Some(0));
    for cmd in ["train", "predict", "evaluate", "synth"] {
        assert_eq!(mida(&[cmd, "--help"]).status.code(), Some(0), "{cmd}");
    }
    assert_eq!(mida(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(mida(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn synth_is_seeded() {
    let (_a, da) = corpus("3");
    let (_b, db) = corpus("3");
    let (_c, dc) = corpus("4");
    for f in ["reports.csv", "tweets.csv", "labels.csv", "ground_truth.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(da.join("tweets.csv")).unwrap(), std::fs::read(dc.join("tweets.csv")).unwrap());
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(da.join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["beta"].as_array().unwrap().len(), 51);
}

#[test]
fn invalid_synth_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mida(&["synth", "--out-dir", p(dir.path()), "--n-signal", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn training_is_byte_identical_for_a_seed() {
    let (dir, data) = corpus("1");
    let m1 = dir.path().join("a/model.json");
    let m2 = dir.path().join("b/model.json");
    std::fs::create_dir_all(m1.parent().unwrap()).unwrap();
    std::fs::create_dir_all(m2.parent().unwrap()).unwrap();
    train(&data, &m1, &["--seed", "7"]);
    train(&data, &m2, &["--seed", "7", "--threads", "1"]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let trace = std::fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    assert!(trace.starts_with("k,r_primal,s_dual,rho,objective,seconds\n"));
}

#[test]
fn full_pipeline_with_holdout() {
    let (dir, data) = corpus("2");
    let model = dir.path().join("model.json");
    let holdout = dir.path().join("held.csv");
    train(&data, &model, &["--holdout-fraction", "0.3", "--holdout-out", p(&holdout)]);
    let held = std::fs::read_to_string(&holdout).unwrap();
    assert_eq!(held.lines().count(), 1 + 60);

    let scores = dir.path().join("scores.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--tweets",
        p(&data.join("tweets.csv")),
        "--out",
        p(&scores),
        "--only-users",
        p(&holdout),
    ]);
    let text = std::fs::read_to_string(&scores).unwrap();
    let ids: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 60);
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "sorted by user id");

    let metrics = dir.path().join("metrics.json");
    ok(&["evaluate", "--scores", p(&scores), "--labels", p(&data.join("labels.csv")), "--out", p(&metrics)]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    for key in ["acc", "pr", "re", "fs", "auc", "aupr", "threshold"] {
        assert!(m[key].is_number(), "{key}");
    }
    assert!(m["auc"].as_f64().unwrap() > 0.8);
    let roc = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,x,y\ninf,0.0,0.0\n"));
    assert!(dir.path().join("pr.csv").exists());
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn zero_model_scores_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("reports.csv"), "report_id,fever,rash\nr0,1,0\n");
    write(&d.join("tweets.csv"), "user_id,tweet_id,fever,rash\na,a1,0,1\nb,b1,2,0\nb,b2,0,0\n");
    write(&d.join("labels.csv"), "user_id,label\na,0\nb,1\n");
    let model = d.join("model.json");
    // lambda1 large enough that every coefficient is thresholded to zero
    train(d, &model, &["--lambda1", "100"]);
    let scores = d.join("scores.csv");
    ok(&["predict", "--model", p(&model), "--tweets", p(&d.join("tweets.csv")), "--out", p(&scores)]);
    assert_eq!(std::fs::read_to_string(&scores).unwrap(), "user_id,score\na,0.5\nb,0.5\n");
}

#[test]
fn evaluate_single_class_writes_partial_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("scores.csv"), "user_id,score\na,0.9\nb,0.2\n");
    write(&d.join("labels.csv"), "user_id,label\na,1\nb,1\n");
    let out = mida(&[
        "evaluate",
        "--scores",
        p(&d.join("scores.csv")),
        "--labels",
        p(&d.join("labels.csv")),
        "--out",
        p(&d.join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "undefined_metric");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(m["re"], 0.5);
    assert!(m["auc"].is_null());
}

#[test]
fn evaluate_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("scores.csv"), "user_id,score\na,0.9\nb,0.8\nc,0.2\n");
    write(&d.join("labels.csv"), "user_id,label\na,1\nb,1\nc,0\n");
    ok(&[
        "evaluate",
        "--scores",
        p(&d.join("scores.csv")),
        "--labels",
        p(&d.join("labels.csv")),
        "--out",
        p(&d.join("m.json")),
    ]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!((m["auc"].as_f64(), m["aupr"].as_f64(), m["fs"].as_f64()), (Some(1.0), Some(1.0), Some(1.0)));
}

#[test]
fn runtime_errors_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mida(&[
        "predict",
        "--model",
        p(&d.join("missing.json")),
        "--tweets",
        p(&d.join("t.csv")),
        "--out",
        p(&d.join("s.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "io");

    write(&d.join("bad.json"), "{\"version\": 1, \"vocab");
    write(&d.join("t.csv"), "user_id,tweet_id,a\nu,1,0\n");
    let out = mida(&["predict", "--model", p(&d.join("bad.json")), "--tweets", p(&d.join("t.csv")), "--out", p(&d.join("s.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "format");
}

#[test]
fn predict_rejects_vocabulary_mismatch() {
    let (dir, data) = corpus("5");
    let model = dir.path().join("model.json");
    train(&data, &model, &["--max-iter", "2"]);
    let other = dir.path().join("other.csv");
    write(&other, "user_id,tweet_id,fever,rash\nu,1,0,1\n");
    let out = mida(&["predict", "--model", p(&model), "--tweets", p(&other), "--out", p(&dir.path().join("s.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn train_reports_malformed_counts_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("reports.csv"), "report_id,fever\nr0,1\n");
    write(&d.join("tweets.csv"), "user_id,tweet_id,fever\na,a1,1\nb,b1,x\n");
    write(&d.join("labels.csv"), "user_id,label\na,0\nb,1\n");
    let out = mida(&[
        "train",
        "--reports",
        p(&d.join("reports.csv")),
        "--tweets",
        p(&d.join("tweets.csv")),
        "--labels",
        p(&d.join("labels.csv")),
        "--out",
        p(&d.join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "parse");
    assert!(String::from_utf8_lossy(&out.stderr).contains("tweets.csv:3: column `fever`"));
}
