#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_nationmood");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().expect("spawn binary")
}

/// Run and require success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

/// Every pipeline stage on a small corpus, writing under `dir`.
pub fn pipeline(dir: &Path, config: &Path, threads: usize) {
    let t = threads.to_string();
    let c = s(config);
    let d = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let g = |args: &[&str]| {
        let mut all = vec!["--config", c, "--threads", &t];
        all.extend_from_slice(args);
        ok(&all);
    };
    g(&["simulate", "--out", &d("sim")]);
    g(&["features", "--input", &d("sim"), "--out", &d("feat")]);
    g(&["train-smm", "--input", &d("sim"), "--features", &d("feat/features.csv"), "--out", &d("smm")]);
    g(&[
        "train-qmm", "--input", &d("sim"), "--features", &d("feat/features.csv"), "--model", &d("smm/smm_model.json"),
        "--with-smm", "--compare", "--out", &d("qmm"),
    ]);
    g(&["score", "--input", &d("sim"), "--model", &d("qmm/qmm_model.json"), "--vocab", &d("qmm/vocab.csv"), "--out", &d("score")]);
    g(&[
        "aggregate", "--scores", &d("score/scores.csv"), "--profiles", &d("sim/profiles.csv"), "--granularity", "daily",
        "--relative-mode", "ratio", "--baseline-from", "2020-01-06", "--baseline-to", "2020-01-12", "--out", &d("agg"),
    ]);
    g(&[
        "aggregate", "--scores", &d("score/scores.csv"), "--profiles", &d("sim/profiles.csv"), "--granularity", "3h",
        "--out", &d("agg3h"),
    ]);
    g(&[
        "analyze-rhythm", "--points", &d("agg/mood_daily.csv"), "--from", "2020-01-07", "--to", "2020-01-19",
        "--holidays", &d("sim/holidays.csv"), "--out", &d("rhythm"),
    ]);
    g(&[
        "analyze-event", "--points", &d("agg3h/mood_3h.csv"), "--granularity", "3h", "--target",
        "2020-01-18T00:00:00+09:00", "--reference", "2020-01-11T00:00:00+09:00", "--shock", "2020-01-19T06:00:00+09:00",
        "--out", &d("event"),
    ]);
    g(&["report", "--dir", s(dir)]);
}

/// Relative path → bytes of every file under `dir`, manifests excluded.
pub fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, d: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else if !p.to_str().unwrap().ends_with(".manifest.json") && !p.ends_with("config.toml") {
                out.insert(p.strip_prefix(base).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Manifest JSON with the run-dependent fields removed.
pub fn stable_manifest(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    let m = v.as_object_mut().unwrap();
    m.remove("timing");
    m.remove("args");
    for key in ["inputs", "outputs"] {
        for e in m.get_mut(key).unwrap().as_array_mut().unwrap() {
            e.as_object_mut().unwrap().remove("path");
        }
    }
    v
}

pub const SMALL: &str = "\
seed = 7

[simgen]
n_users = 30
days = 14

[smm.hyperparams]
n_estimators = 30

[qmm]
splits = 3
";
