use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SPEC: &str = r#"{"classes":["cat","dog","fox"],"plfs":[
{"name":"lf_a","codomain":[["cat"],["dog"],["fox"]]},
{"name":"lf_b","codomain":[["cat"],["dog"],["fox"]]},
{"name":"p01","codomain":[["cat","dog"],["fox"]]},
{"name":"p12","codomain":[["dog","fox"],["cat"]]},
{"name":"p02","codomain":[["cat","fox"],["dog"]]}]}
"#;

fn nplm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nplm")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = nplm(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn err_line(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(stderr.trim_end().lines().count(), 1, "stderr: {stderr}");
    stderr.trim_end().to_owned()
}

fn workspace(m: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    ok(dir.path(), &["synth", "--spec", "spec.json", "--out", "votes.csv", "--m", m, "--seed", "11"]);
    dir
}

/// Gold labels file cut out of the synth truth sidecar.
fn write_gold(dir: &Path) {
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("votes.csv.truth.json")).unwrap()).unwrap();
    let mut text = String::from("label\n");
    for l in truth["labels"].as_array().unwrap() {
        text.push_str(l.as_str().unwrap());
        text.push('\n');
    }
    fs::write(dir.join("gold.csv"), text).unwrap();
}

fn accuracy(report: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(report).unwrap();
    v["accuracy"].as_f64().unwrap()
}

#[test]
fn full_pipeline() {
    let dir = workspace("4000");
    let d = dir.path();
    write_gold(d);
    ok(d, &["train", "--spec", "spec.json", "--votes", "votes.csv", "--out", "params.json", "--optimizer", "adam", "--lr", "0.05", "--epochs", "20"]);
    ok(d, &["infer", "--spec", "spec.json", "--votes", "votes.csv", "--params", "params.json", "--out", "post.csv"]);
    ok(d, &["infer", "--spec", "spec.json", "--votes", "votes.csv", "--method", "nc", "--out", "nc.csv"]);
    ok(d, &["infer", "--spec", "spec.json", "--votes", "votes.csv", "--method", "lfs-only", "--out", "lf.csv"]);

    let nplm_acc = accuracy(&ok(d, &["eval", "--spec", "spec.json", "--gold", "gold.csv", "--posterior", "post.csv"]));
    let nc_acc = accuracy(&ok(d, &["eval", "--spec", "spec.json", "--gold", "gold.csv", "--labels", "nc.csv"]));
    let lf_acc = accuracy(&ok(d, &["eval", "--spec", "spec.json", "--gold", "gold.csv", "--labels", "lf.csv"]));
    assert!(nplm_acc > 0.6, "nplm accuracy {nplm_acc}");
    assert!(nplm_acc >= nc_acc - 0.02, "nplm {nplm_acc} vs nc {nc_acc}");
    assert!(lf_acc <= nc_acc + 0.02, "lfs-only {lf_acc} vs nc {nc_acc}");

    let post = fs::read_to_string(d.join("post.csv")).unwrap();
    assert_eq!(post.lines().next(), Some("cat,dog,fox"));
    assert_eq!(post.lines().count(), 4001);
}

#[test]
fn perfect_predictions_score_one() {
    let dir = workspace("300");
    let d = dir.path();
    write_gold(d);
    let report = ok(d, &["eval", "--spec", "spec.json", "--gold", "gold.csv", "--labels", "gold.csv", "--out", "eval.json"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["accuracy"].as_f64(), Some(1.0));
    assert_eq!(v["macro_f1"].as_f64(), Some(1.0));
    assert_eq!(fs::read_to_string(d.join("eval.json")).unwrap(), report);
}

#[test]
fn train_and_synth_are_deterministic() {
    let dir = workspace("1500");
    let d = dir.path();
    ok(d, &["synth", "--spec", "spec.json", "--out", "again.csv", "--m", "1500", "--seed", "11"]);
    assert_eq!(fs::read(d.join("votes.csv")).unwrap(), fs::read(d.join("again.csv")).unwrap());
    let args = |out: &'static str| {
        ["train", "--spec", "spec.json", "--votes", "votes.csv", "--out", out, "--seed", "5", "--balance", "learned", "--batch-size", "64"]
    };
    ok(d, &args("p1.json"));
    ok(d, &args("p2.json"));
    assert_eq!(fs::read(d.join("p1.json")).unwrap(), fs::read(d.join("p2.json")).unwrap());
}

#[test]
fn train_end_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut feats = String::from("x0,x1\n");
    let mut post = String::from("a,b\n");
    for r in 0..40 {
        let x = if r % 2 == 0 { 2.0 } else { -2.0 };
        feats.push_str(&format!("{x},{}\n", r as f64 * 0.01));
        post.push_str(if r % 2 == 0 { "0.9,0.1\n" } else { "0.2,0.8\n" });
    }
    fs::write(d.join("x.csv"), feats).unwrap();
    fs::write(d.join("post.csv"), post).unwrap();
    let report = ok(d, &["train-end", "--features", "x.csv", "--posterior", "post.csv", "--out", "model.json"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["agreement_with_target_argmax"].as_f64(), Some(1.0));
    assert!(d.join("model.json").exists());
}

#[test]
fn identifiability_report_and_bench() {
    let dir = workspace("10");
    let d = dir.path();
    let report = ok(d, &["check-identifiability", "--spec", "spec.json"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["status"], "satisfied");

    let bench = ok(d, &["bench", "--m", "2000", "--naive-cap", "500", "--repeats", "1"]);
    let v: serde_json::Value = serde_json::from_str(&bench).unwrap();
    assert!(v["speedup"].as_f64().unwrap() > 0.0);
}

#[test]
fn errors_are_single_coded_lines() {
    let dir = workspace("20");
    let d = dir.path();

    let out = nplm(d, &["infer", "--spec", "missing.json", "--votes", "votes.csv", "--out", "o.csv"]);
    assert!(err_line(&out).starts_with("error[E_FILE_NOT_FOUND]"));
    assert_eq!(out.status.code(), Some(3));

    fs::write(d.join("bad.json"), "{ not json").unwrap();
    let out = nplm(d, &["check-identifiability", "--spec", "bad.json"]);
    assert!(err_line(&out).starts_with("error[E_PARSE]"));

    fs::write(d.join("short.csv"), "lf_a,lf_b\n0,1\n").unwrap();
    let out = nplm(d, &["train", "--spec", "spec.json", "--votes", "short.csv", "--out", "p.json"]);
    assert!(err_line(&out).starts_with("error[E_SHAPE_MISMATCH]"));

    let out = nplm(d, &["infer", "--spec", "spec.json", "--votes", "votes.csv", "--out", "o.csv"]);
    assert!(err_line(&out).starts_with("error[E_INVALID_CONFIG]"));

    let out = nplm(d, &["train", "--spec", "spec.json"]);
    assert!(err_line(&out).starts_with("error[E_USAGE]"));
    assert_eq!(out.status.code(), Some(2));

    let out = nplm(d, &["train", "--spec", "spec.json", "--votes", "votes.csv", "--out", "p.json", "--batch-size", "0"]);
    assert!(err_line(&out).starts_with("error[E_INVALID_CONFIG]"));
}
