#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mhqg_core::trainer::TrainingConfig;

pub fn mhqg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhqg"))
        .args(args)
        .current_dir(dir)
        .env_remove("MHQG_DATA")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs and asserts success, echoing stderr on failure.
pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = mhqg(dir, args);
    assert!(
        out.status.success(),
        "mhqg {args:?} exited with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn tiny_config() -> TrainingConfig {
    TrainingConfig {
        word_dim: 8,
        hidden: 6,
        decoder_hidden: 6,
        max_len: 12,
        dropout: 0.1,
        batch_size: 4,
        phase1_steps: 6,
        phase2_steps: 4,
        phase2_lr: 1e-3,
        eval_every: 3,
        checkpoint_every: 3,
        warmup_steps: 2,
        history_size: 50,
        reward_word_dim: 8,
        reward_char_dim: 3,
        reward_char_filters: 4,
        reward_char_width: 3,
        reward_max_word_chars: 8,
        reward_hidden: 5,
        reward_epochs: 2,
        reward_batch_size: 4,
        reward_abort_below_f1: 0.0,
        ..Default::default()
    }
}

pub fn write_config(dir: &Path, name: &str, cfg: &TrainingConfig) {
    std::fs::write(dir.join(name), cfg.to_toml()).unwrap();
}

/// Every command in order, with paths relative to `dir`.
pub fn pipeline(dir: &Path) {
    write_config(dir, "cfg.toml", &tiny_config());
    ok(dir, &["synth", "--out", "raw", "--examples", "30", "--comparison-fraction", "0.2"]);
    ok(dir, &["preprocess", "raw/synthetic.json", "--out", "data"]);
    ok(dir, &["train-reward", "--config", "cfg.toml", "--data", "data", "--out", "run"]);
    ok(dir, &["train-mtl", "--config", "cfg.toml", "--data", "data", "--out", "run"]);
    ok(dir, &["train-rl", "--config", "cfg.toml", "--data", "data", "--out", "run", "--reward", "run/reward.ckpt"]);
    ok(dir, &["generate", "--checkpoint", "run/rl.ckpt", "--data", "data", "--out", "gen", "--beam", "3"]);
    ok(dir, &["generate", "--checkpoint", "run/mtl.ckpt", "--data", "data", "--out", "gen_mtl", "--beam", "1"]);
    ok(
        dir,
        &[
            "evaluate",
            "--generations",
            "gen/generations.jsonl",
            "--data",
            "data",
            "--reward",
            "run/reward.ckpt",
            "--compare",
            "gen_mtl/generations.jsonl",
            "--out",
            "eval",
        ],
    );
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().to_path_buf();
            let mut bytes = std::fs::read(&path).unwrap();
            if rel.file_name().unwrap().to_string_lossy().starts_with("manifest.") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                assert!(v.as_object_mut().unwrap().remove("wall_clock_seconds").is_some());
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
}

/// Files under `dir`, with manifests stripped of their wall-clock field.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    collect(dir, dir, &mut out);
    out
}

/// Relative paths whose bytes differ or exist on one side only.
pub fn differences(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    let mut keys: Vec<&PathBuf> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
