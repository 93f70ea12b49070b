#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eegdit"));
    c.env_remove("SDF_THREADS");
    c
}

/// A config small enough that every command finishes in seconds.
pub fn tiny_config(out: &Path) -> Value {
    json!({
        "dataset": {"synth": {"per_class": 8, "len": 64, "sample_rate_hz": 64.0, "seed": 5}},
        "split": {"train_frac": 0.5, "val_frac": 0.25, "test_frac": 0.25, "seed": 1},
        "schedule": {"steps": 10, "beta_start": 0.01, "beta_end": 0.3},
        "model": {
            "patch_len": 16, "hidden_dim": 16, "depth": 1, "heads": 2,
            "msc_kernels_low": [15, 31], "msc_kernels_high": [3, 7],
            "msc_channels": 8, "dfsi_hidden": 16
        },
        "classifier": {
            "temporal_kernel": 16, "temporal_filters": 4, "separable_filters": 8,
            "separable_kernel": 8, "embedding_dim": 8
        },
        "diffusion_training": {"epochs": 2, "batch_size": 8, "lr": 1e-3, "weight_decay": 0.0},
        "classifier_training": {"epochs": 3, "batch_size": 8, "lr": 1e-3, "weight_decay": 0.0},
        "seeds": [1, 2],
        "out": out
    })
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

pub fn run(config: &Path, args: &[&str]) -> Output {
    bin().arg("--config").arg(config).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), stderr(&o));
    o
}

fn is_timestamp(b: &[u8]) -> bool {
    // YYYY-MM-DDTHH:MM:SSZ
    let digits = [0, 1, 2, 3, 5, 6, 8, 9, 11, 12, 14, 15, 17, 18];
    b.len() >= 20
        && digits.iter().all(|&i| b[i].is_ascii_digit())
        && b[4] == b'-'
        && b[7] == b'-'
        && b[10] == b'T'
        && b[13] == b':'
        && b[16] == b':'
        && b[19] == b'Z'
}

/// Blanks timestamps and wall-clock durations, the only run-to-run differences.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.trim_start().starts_with("wall_time_s") {
            continue;
        }
        let b = line.as_bytes();
        let mut i = 0;
        while i < b.len() {
            if is_timestamp(&b[i..]) {
                out.push_str("<time>");
                i += 20;
            } else {
                let ch = line[i..].chars().next().unwrap();
                out.push(ch);
                i += ch.len_utf8();
            }
        }
        out.push('\n');
    }
    out
}

/// Every file under `root`, keyed by relative path. Text is normalized; other
/// bytes are kept as they are.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
                continue;
            }
            let bytes = std::fs::read(&path).unwrap();
            let body = match String::from_utf8(bytes) {
                Ok(text) => normalize(&text).into_bytes(),
                Err(e) => e.into_bytes(),
            };
            acc.insert(path.strip_prefix(root).unwrap().to_path_buf(), body);
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

/// Names of files whose normalized contents differ, or that exist on one side only.
pub fn differing(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    let mut keys: Vec<&PathBuf> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
