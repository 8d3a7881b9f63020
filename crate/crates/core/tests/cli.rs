use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazcrf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn build_gazetteer(dir: &Path) -> PathBuf {
    let out = dir.join("gaz.trie");
    let lists: Vec<String> = ["per", "loc", "grp", "corp", "cw", "prod"]
        .iter()
        .map(|t| toy(&format!("gazetteer/{}.txt", t.to_uppercase())).display().to_string())
        .collect();
    let mut args = vec!["gazetteer-build", "--out", s(&out)];
    for (flag, path) in ["--per", "--loc", "--grp", "--corp", "--cw", "--prod"].iter().zip(&lists) {
        args.extend([*flag, path.as_str()]);
    }
    ok(&args);
    out
}

#[test]
fn toy_pipeline_reports_macro_f1() {
    let dir = tempfile::tempdir().unwrap();
    let gaz = build_gazetteer(dir.path());
    let feats = dir.path().join("train.feat");
    let model = dir.path().join("model.crf");
    let pred = dir.path().join("pred.conll");
    let train = toy("train.conll");
    let test = toy("test.conll");
    ok(&["featurize", "--in", s(&train), "--preset", "D", "--gazetteer", s(&gaz), "--out", s(&feats)]);
    assert!(std::fs::read_to_string(&feats).unwrap().starts_with("# preset=D"));
    ok(&["train", "--in", s(&feats), "--preset", "D", "--max-iters", "50", "--out", s(&model)]);
    ok(&["tag", "--model", s(&model), "--in", s(&test), "--gazetteer", s(&gaz), "--out", s(&pred)]);
    let report = ok(&["eval", "--gold", s(&test), "--pred", s(&pred)]);
    let f1: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("macro_f1="))
        .expect("macro_f1 line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&f1));
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["train", "--preset", "Z"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missing_resource_exits_3_and_names_flag() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.crf");
    let out = run(&["train", "--in", s(&toy("train.conll")), "--preset", "F", "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=config:"), "{err}");
    assert!(err.contains("--kmeans"), "{err}");
    assert!(!model.exists());
}

#[test]
fn unreadable_input_exits_4_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("stats.tsv");
    let out = run(&["stats", "--in", "/definitely/not/here.conll", "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=io:"));
    assert!(!out_path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn weights_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.tsv");
    std::fs::write(&counts, "O\t835\nB-PER\t0\nB-LOC\t100\n").unwrap();
    let text = ok(&["weights", "--counts", s(&counts), "--n", "13", "--floor", "0.01"]);
    let get = |k: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(get("weight.B-PER"), 10.0);
    assert_eq!(get("weight.O"), 0.01);
    let raw = (1.0 - 15.0 * 100.0 / 935.0) * 10.0;
    assert!((get("raw.B-LOC") - raw).abs() < 1e-12);
}

#[test]
fn stats_counts_feed_weights() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.tsv");
    ok(&["stats", "--in", s(&toy("train.conll")), "--out", s(&stats)]);
    let text = ok(&["weights", "--counts", s(&stats)]);
    assert!(text.lines().any(|l| l.starts_with("weight.O=")));
}

#[test]
fn kmeans_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let emb = toy("train.emb24.sc");
    let outs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|n| {
            let out = dir.path().join(n);
            ok(&["--seed", "3", "kmeans", "--in", s(&emb), "--k", "4", "--out", s(&out)]);
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}
