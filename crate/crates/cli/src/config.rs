//! Run configuration: a TOML file whose keys are namespaced by module,
//! either as tables (`[smm]`) or dotted keys (`smm.n_estimators = 200`).

use std::path::Path;

use nationmood::simgen::SimConfig;
use nationmood::smm::{FoldMode, HyperParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed, overridden by `--seed`.
    pub seed: u64,
    pub simgen: SimConfig,
    pub ingest: IngestConfig,
    pub smm: SmmConfig,
    pub qmm: QmmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            simgen: SimConfig::default(),
            ingest: IngestConfig::default(),
            smm: SmmConfig::default(),
            qmm: QmmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Largest tolerated share of malformed lines per input file.
    pub max_bad_ratio: f64,
    pub window_minutes: u32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { max_bad_ratio: 0.01, window_minutes: 180 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmmConfig {
    pub hyperparams: HyperParams,
    pub folds: usize,
    pub fold_mode: FoldMode,
    /// Random-search trials; 0 trains with `hyperparams` as given.
    pub search_budget: usize,
}

impl Default for SmmConfig {
    fn default() -> Self {
        SmmConfig { hyperparams: HyperParams::default(), folds: 5, fold_mode: FoldMode::Record, search_budget: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmmConfig {
    pub lambda: f64,
    pub min_count: u64,
    pub splits: usize,
    pub train_fraction: f64,
}

impl Default for QmmConfig {
    fn default() -> Self {
        QmmConfig { lambda: 1.0, min_count: 3, splits: 10, train_fraction: 0.8 }
    }
}

/// The loaded configuration and the hash of its source text.
pub struct Loaded {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn load(path: Option<&Path>) -> Result<Loaded> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(p.to_path_buf()),
            _ => CliError::Other(format!("{}: {e}", p.display())),
        })?,
        None => String::new(),
    };
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config: {}", e.message().trim())))?;
    Ok(Loaded { config, sha256: hex::encode(Sha256::digest(text.as_bytes())) })
}
