//! End-to-end runs of the `spmf` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spmf::skeleton::write_canonical_file;
use spmf::synthetic::{generate, SyntheticConfig};

fn spmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spmf")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn corpus(dir: &Path, classes: usize, per_class: usize) -> PathBuf {
    let data = dir.join("data");
    std::fs::create_dir_all(&data).unwrap();
    let seqs = generate(&SyntheticConfig {
        classes,
        per_class,
        ..Default::default()
    })
    .unwrap();
    for (i, s) in seqs.iter().enumerate() {
        write_canonical_file(&data.join(format!("seq{i:03}.json")), s).unwrap();
    }
    data
}

/// Relative path -> bytes for every file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn pngs(dir: &Path) -> usize {
    snapshot(dir).keys().filter(|p| p.extension().is_some_and(|e| e == "png")).count()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn encode_counts_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 1, 5);
    let plain = tmp.path().join("plain");
    let out = spmf(&["encode", "--data", s(&data), "--split", "none", "--out", s(&plain)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(pngs(&plain), 5);
    let index = std::fs::read_to_string(plain.join("index.csv")).unwrap();
    assert!(index.starts_with("path,label,subject,camera,trial,augmented,seed\n"));
    assert_eq!(index.lines().count(), 6);

    let dir = tmp.path().join("aug");
    let run = || {
        let out = spmf(&[
            "encode", "--data", s(&data), "--split", "none", "--augment", "3", "--seed", "9", "--out", s(&dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        snapshot(&dir)
    };
    let first = run();
    assert_eq!(pngs(&dir), 20);
    assert_eq!(first, run());
    assert!(std::fs::read_to_string(dir.join("config.json")).unwrap().contains("\"seed\": 9"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 2, 2);
    let out = s(&tmp.path().join("o")).to_string();
    // missing input path, unknown split, invalid depth, bad config file
    assert_eq!(code(&spmf(&["encode", "--data", "/nonexistent/dir", "--out", &out])), 2);
    assert_eq!(code(&spmf(&["encode", "--data", s(&data), "--split", "nope", "--out", &out])), 2);
    assert_eq!(code(&spmf(&["train", "--depth", "22", "--out", &out])), 2);
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{\"unknown_field\": 1}").unwrap();
    assert_eq!(code(&spmf(&["encode", "--config", s(&cfg), "--data", s(&data), "--out", &out])), 2);
    // an unreadable sequence is reported and fails the run
    std::fs::write(data.join("broken.json"), "{not json").unwrap();
    let res = spmf(&["encode", "--data", s(&data), "--split", "none", "--out", &out]);
    assert_eq!(code(&res), 1);
    let failures = std::fs::read_to_string(tmp.path().join("o").join("failures.txt")).unwrap();
    assert!(failures.contains("broken.json"));
}

#[test]
fn train_resume_eval_and_ablation_log() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path(), 2, 4);
    let images = tmp.path().join("images");
    let ok = |out: Output| {
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    ok(spmf(&["encode", "--data", s(&data), "--out", s(&images)]));

    let train = |name: &str| {
        let dir = tmp.path().join(name);
        ok(spmf(&["train", "--images", s(&images), "--epochs", "2", "--deterministic", "--out", s(&dir)]));
        dir
    };
    let a = train("model_a");
    let b = train("model_b");
    assert_eq!(std::fs::read(a.join("model.ckpt")).unwrap(), std::fs::read(b.join("model.ckpt")).unwrap());
    let log = std::fs::read_to_string(a.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,loss,train_acc,test_acc"));
    assert_eq!(log.lines().count(), 4);

    let resumed = tmp.path().join("resumed");
    let ck = a.join("model.ckpt");
    ok(spmf(&[
        "train", "--images", s(&images), "--resume", s(&ck), "--epochs", "2", "--deterministic", "--out", s(&resumed),
    ]));
    let log = std::fs::read_to_string(resumed.join("train_log.csv")).unwrap();
    let last = log.lines().last().unwrap();
    assert!(last.starts_with("4,"), "resumed log ends with {last}");

    let eval = tmp.path().join("eval");
    ok(spmf(&["eval", "--images", s(&images), "--checkpoint", s(&ck), "--out", s(&eval)]));
    assert!(eval.join("eval.json").exists());

    // equalized images cannot feed the ablation arm
    let res = spmf(&["train", "--images", s(&images), "--no-enhance", "--epochs", "1", "--out", s(&eval)]);
    assert_eq!(code(&res), 2);
    let plain = tmp.path().join("plain");
    ok(spmf(&["encode", "--data", s(&data), "--no-enhance", "--out", s(&plain)]));
    let ablation = tmp.path().join("ablation");
    ok(spmf(&["train", "--images", s(&plain), "--no-enhance", "--epochs", "1", "--out", s(&ablation)]));
    assert!(ablation.join("train_log_no_enhance.csv").exists());
    assert!(!ablation.join("train_log.csv").exists());
}
