use std::path::Path;
use std::process::{Command, Output};

fn fpvit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpvit")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(fpvit(&["--help"]).status.code(), Some(0));
    assert_eq!(fpvit(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fpvit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fpvit(&["identify", "--store", "x.fpem", "--out", "o", "--closed", "--open"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_a_one_line_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fpvit(&["embed", "--corpus", &p(tmp.path(), "none"), "--model", &p(tmp.path(), "m.fpvt"), "--out", &p(tmp.path(), "e.fpem")]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=io exit=2"), "{err}");
}

#[test]
fn unknown_config_key_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = p(tmp.path(), "bad.cfg");
    std::fs::write(&cfg, "[run]\nbogus = 1\n").unwrap();
    let out = fpvit(&["--config", &cfg, "bench", "--dim", "8", "--gallery-size", "10", "--out", &p(tmp.path(), "b.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn bad_fusion_weights_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fpvit(&["authenticate", "--store", "a.fpem", "--store", "b.fpem", "--fuse", "0.7", "--out", &p(tmp.path(), "auth")]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn small_bench_writes_report_and_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = p(tmp.path(), "bench.json");
    let run = fpvit(&["--threads", "1", "bench", "--dim", "16", "--gallery-size", "500", "--repetitions", "2", "--out", &out]);
    assert!(run.status.success(), "{}", stderr(&run));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(report["multi_thread"]["mean"].as_f64().unwrap() > 0.0);
    assert!(tmp.path().join("bench.json.provenance.json").exists());
}
