#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn misinfo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_misinfo"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn misinfo")
}

pub fn ok(args: &[&str]) -> String {
    let out = misinfo(args);
    assert!(
        out.status.success(),
        "misinfo {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub const SMALL_SYNTH: &str = r#"{
  "n_misinformation": 80,
  "n_propaganda": 12,
  "n_authoritative": 120,
  "n_unlabeled_misinfo": 20,
  "n_unlabeled_propaganda": 4,
  "n_benign_unlabeled": 400,
  "months": 3,
  "start_month": "2022-10",
  "seed": 3
}"#;

/// Synthetic data run through the whole pipeline; returns the artifact root.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("synth.json");
        std::fs::write(&cfg, SMALL_SYNTH).unwrap();
        ok(&["synth", "--config", p(&cfg), "--out-dir", p(&dir.path().join("data"))]);
        let pipeline = dir.path().join("pipeline.json");
        std::fs::write(
            &pipeline,
            r#"{"logs": "data/traffic.csv", "labels": ["data/labels.csv"], "artifact_root": "out"}"#,
        )
        .unwrap();
        ok(&["pipeline", "--config", p(&pipeline)]);
        Fixture { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn run_dir(&self) -> PathBuf {
        let runs: Vec<_> = std::fs::read_dir(self.path("out/runs")).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(runs.len(), 1);
        runs[0].clone()
    }
}
