use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One per run, written as `<command>.manifest.json` in the output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    /// SHA-256 of the config file, or of the resolved arguments when there is none.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

pub struct Run {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, out_dir: &Path, config_bytes: &[u8], seeds: Vec<u64>, threads: usize) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                command_line: std::env::args().collect(),
                config_hash: sha256_hex(config_bytes),
                seeds,
                version: env!("CARGO_PKG_VERSION").to_string(),
                threads,
                outputs: Vec::new(),
                timings: BTreeMap::new(),
            },
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
        })
    }

    /// Path inside the output directory, recorded as an output.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.manifest.timings.insert(label.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.manifest
            .timings
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let path = self.out_dir.join(format!("{}.manifest.json", self.manifest.command));
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
