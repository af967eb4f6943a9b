mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmrerank"))
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn mmrerank")
}

/// The fixture config with generator swapped for `generator` (a file in the fixture dir or absolute).
fn config_with_generator(dir: &Path, generator: &str) -> PathBuf {
    let fx = common::landmarks();
    let text = std::fs::read_to_string(fx.join("pipeline.toml"))
        .unwrap()
        .replace("dir = \".\"", &format!("dir = {:?}", fx.display().to_string()))
        .replace(
            "\"keywords.json\"",
            &format!("{:?}", fx.join("keywords.json").display().to_string()),
        )
        .replace(
            "mock:mock_captioner.json",
            &format!("mock:{}", fx.join("mock_captioner.json").display()),
        )
        .replace(
            "mock:mock_fluency.json",
            &format!("mock:{}", fx.join("mock_fluency.json").display()),
        )
        .replace("mock:mock_generator.json", &format!("mock:{generator}"));
    let p = dir.join("pipeline.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                if name != "run_store.json" && name != ".lock" {
                    out.push((name, std::fs::read(&p).unwrap()));
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_run_is_deterministic_and_resumable() {
    let cfg = common::landmarks().join("pipeline.toml");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(&cfg, a.path(), &["run"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let again = run(&cfg, a.path(), &["run"]);
    let stdout = String::from_utf8_lossy(&again.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.contains(": skipped")).count(),
        8,
        "{stdout}"
    );
    assert!(run(&cfg, b.path(), &["run"]).status.success());
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn forced_rerun_rewrites_identical_outputs() {
    let cfg = common::landmarks().join("pipeline.toml");
    let a = tempfile::tempdir().unwrap();
    assert!(run(&cfg, a.path(), &["run"]).status.success());
    let before = files(a.path());
    let forced = run(&cfg, a.path(), &["--force", "run"]);
    assert!(!String::from_utf8_lossy(&forced.stdout).contains("skipped"));
    assert_eq!(before, files(a.path()));
}

#[test]
fn changed_input_invalidates_downstream_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = common::landmarks();
    let gen = tmp.path().join("gen.json");
    std::fs::copy(fx.join("mock_generator.json"), &gen).unwrap();
    let cfg = config_with_generator(tmp.path(), &gen.display().to_string());
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, &["run"]).status.success());
    std::fs::write(&gen, r#"{"kind": "position_biased", "default_answer": "Paris"}"#).unwrap();
    let o = run(&cfg, &out, &["run"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("score: skipped"), "{stdout}");
    assert!(stdout.contains("rerank: done"), "{stdout}");
    assert!(stdout.contains("eval: done"), "{stdout}");
}

#[test]
fn missing_dependency_exits_3() {
    let out = tempfile::tempdir().unwrap();
    let cfg = common::landmarks().join("pipeline.toml");
    let o = run(&cfg, out.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`ingest`"));
    assert!(run(&cfg, out.path(), &["ingest"]).status.success());
    let o = run(&cfg, out.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`rerank`"));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[stage1]\nk = 0\n").unwrap();
    assert_eq!(run(&cfg, &tmp.path().join("out"), &["ingest"]).status.code(), Some(2));
    std::fs::write(&cfg, "[stage9]\n").unwrap();
    assert_eq!(run(&cfg, &tmp.path().join("out"), &["ingest"]).status.code(), Some(2));
}

#[test]
fn unavailable_generator_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("silent.json");
    std::fs::write(&gen, r#"{"kind": "scripted"}"#).unwrap();
    let cfg = config_with_generator(tmp.path(), &gen.display().to_string());
    let out = tmp.path().join("out");
    for stage in ["ingest", "unify", "train-ranker", "score"] {
        assert!(run(&cfg, &out, &[stage]).status.success(), "{stage}");
    }
    let o = run(&cfg, &out, &["rerank"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn subcommand_help_names_dependencies() {
    for (cmd, needs) in [
        ("eval", "rerank"),
        ("score", "train-ranker"),
        ("ablate", "tune-threshold"),
    ] {
        let o = bin().args([cmd, "--help"]).output().unwrap();
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("Needs:") && text.contains(needs), "{cmd}: {text}");
    }
}

#[test]
fn sweep_accepts_k_list() {
    let cfg = common::landmarks().join("pipeline.toml");
    let out = tempfile::tempdir().unwrap();
    for stage in ["ingest", "unify", "train-ranker", "score"] {
        assert!(run(&cfg, out.path(), &[stage]).status.success());
    }
    assert!(run(&cfg, out.path(), &["sweep-doccount", "--k", "1,3"])
        .status
        .success());
    let csv = std::fs::read_to_string(out.path().join("sweep_doccount.csv")).unwrap();
    let ks: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["1", "3"]);
}
