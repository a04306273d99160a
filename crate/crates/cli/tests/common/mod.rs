//! Helpers for driving the `wirematch` binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Output;

pub fn wirematch(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_wirematch"))
        .args(args)
        .output()
        .expect("spawn wirematch")
}

/// Runs the binary and panics with its stderr on failure.
pub fn ok(args: &[&str]) {
    let out = wirematch(args);
    assert!(
        out.status.success(),
        "wirematch {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, json).unwrap();
    p
}

/// Every file below `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small, quick settings shared by the end-to-end tests.
pub const SMALL: &str = r#"{
  "dataset": {"pairs": 3, "min_difficulty": 0.0, "max_difficulty": 0.1},
  "train": {"iterations": 40, "log_every": 10, "checkpoint_every": 20, "max_difficulty": 0.1}
}"#;

/// Runs every command once into `root/<command>`.
pub fn run_pipeline(root: &Path, cfg: &Path, jobs: &str) {
    let c = s(cfg);
    let d = root.join("synth");
    ok(&["synth", "--config", c, "--seed", "5", "--jobs", jobs, "--out", s(&d)]);
    let t = root.join("train");
    ok(&["train", "--config", c, "--seed", "5", "--jobs", jobs, "--data", s(&d), "--out", s(&t)]);
    let m = root.join("match");
    let ckpt = t.join("checkpoint.json");
    ok(&["match", "--config", c, "--jobs", jobs, "--data", s(&d), "--checkpoint", s(&ckpt), "--out", s(&m)]);
    let g = root.join("gt");
    ok(&["gt", "--config", c, "--jobs", jobs, "--data", s(&d), "--out", s(&g)]);
    let e = root.join("eval");
    ok(&["eval", "--config", c, "--jobs", jobs, "--data", s(&d), "--matches", s(&m), "--out", s(&e)]);
    let pair = d.join("pairs/0000");
    let r = root.join("rotation");
    let k = root.join("k.json");
    std::fs::write(&k, r#"{"K_a": [[200, 0, 128], [0, 200, 96], [0, 0, 1]], "K_b": [[200, 0, 128], [0, 200, 96], [0, 0, 1]]}"#).unwrap();
    let wirematch_r = wirematch(&[
        "rotation", "--config", c, "--seed", "5",
        "--a", s(&pair.join("a.features.json")),
        "--b", s(&pair.join("b.features.json")),
        "--matches", s(&m.join("pairs/0000/matches.json")),
        "--intrinsics", s(&k),
        "--out", s(&r),
    ]);
    // an untrained matcher may find too few matches; the error must then
    // be reproducible too
    std::fs::create_dir_all(&r).unwrap();
    std::fs::write(r.join("status"), [wirematch_r.status.success() as u8]).unwrap();
    std::fs::write(r.join("stderr"), &wirematch_r.stderr).unwrap();
}
