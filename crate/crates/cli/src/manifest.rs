use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sessions_per_sec: Option<f64>,
    pub threads: usize,
}

/// Record of one run: everything needed to reproduce it and to verify its
/// artifacts. Only `timing` varies between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub args: Vec<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub timing: Timing,
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut n = 0u64;
    loop {
        let k = r.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((hex::encode(h.finalize()), n))
}

/// Collects inputs, outputs and metrics while a command runs.
pub struct Recorder {
    command: String,
    config_sha256: String,
    seed: u64,
    started: Instant,
    pub seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub sessions: Option<usize>,
}

impl Recorder {
    pub fn new(command: &str, config_sha256: &str, seed: u64) -> Self {
        Recorder {
            command: command.to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
            started: Instant::now(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            sessions: None,
        }
    }

    pub fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|x| x == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    /// Hash everything and write `<out>/<command>.manifest.json`.
    pub fn finish(self, out: &Path, args: Vec<String>) -> Result<PathBuf> {
        let wall = self.started.elapsed().as_secs_f64();
        let entry = |p: &PathBuf, base: Option<&Path>| -> Result<FileEntry> {
            let (sha256, bytes) = sha256_file(p)?;
            let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p);
            Ok(FileEntry { path: shown.display().to_string(), sha256, bytes })
        };
        let inputs = self.inputs.iter().map(|p| entry(p, None)).collect::<Result<Vec<_>>>()?;
        let outputs = self.outputs.iter().map(|p| entry(p, Some(out))).collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            args,
            config_sha256: self.config_sha256,
            seed: self.seed,
            seeds: self.seeds,
            inputs,
            outputs,
            metrics: self.metrics,
            timing: Timing {
                wall_seconds: wall,
                sessions_per_sec: self.sessions.map(|n| if wall > 0.0 { n as f64 / wall } else { f64::INFINITY }),
                threads: rayon::current_num_threads(),
            },
        };
        let path = out.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
