//! Loading a corpus directory into sessions.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nationmood::corpus::{
    parse_mood_reports, parse_profiles, parse_query_log, parse_sensor_log, sessionize, ParseOptions, Session,
    SessionKey, MINUTE_MS,
};
use nationmood::featurex::FeatureVector;
use nationmood::simgen::FILES;

use crate::config::IngestConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct Need {
    pub sensors: bool,
    pub queries: bool,
    pub reports: bool,
}

pub struct Corpus {
    pub sessions: Vec<Session>,
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

/// Paths a load with `need` will read, checked for existence first so a
/// missing file fails before anything is parsed or written.
pub fn corpus_files(dir: &Path, need: Need) -> Result<Vec<PathBuf>> {
    require(dir)?;
    let mut files = vec![dir.join(FILES.profiles)];
    if need.sensors {
        files.push(dir.join(FILES.sensors));
    }
    if need.queries {
        files.push(dir.join(FILES.queries));
    }
    if need.reports {
        files.push(dir.join(FILES.reports));
    }
    for f in &files {
        require(f)?;
    }
    Ok(files)
}

pub fn load_corpus(dir: &Path, cfg: &IngestConfig, need: Need) -> Result<Corpus> {
    corpus_files(dir, need)?;
    let opts = ParseOptions { max_bad_ratio: cfg.max_bad_ratio };
    let window = i64::from(cfg.window_minutes) * MINUTE_MS;
    if window <= 0 || nationmood::corpus::DAY_MS % window != 0 {
        return Err(CliError::Usage(format!("ingest.window_minutes {} must divide a day", cfg.window_minutes)));
    }
    let profiles = parse_profiles(&dir.join(FILES.profiles), opts)?.records;
    let samples = if need.sensors { parse_sensor_log(&dir.join(FILES.sensors), opts)?.records } else { Vec::new() };
    let queries = if need.queries { parse_query_log(&dir.join(FILES.queries), opts)?.records } else { Vec::new() };
    let reports = if need.reports { parse_mood_reports(&dir.join(FILES.reports), opts)?.records } else { Vec::new() };
    let (sessions, report) = sessionize(samples, reports, queries, &profiles, window);
    if !report.unknown_users.is_empty() {
        log::warn!("{} user(s) without a profile use the default offset", report.unknown_users.len());
    }
    Ok(Corpus { sessions })
}

/// Feature rows aligned with `sessions`; sessions without a row get an
/// all-missing vector with zero coverage.
pub fn align_features(sessions: &[Session], rows: Vec<FeatureVector>, n_features: usize) -> Vec<FeatureVector> {
    let mut by_key: HashMap<SessionKey, FeatureVector> = rows.into_iter().map(|r| (r.key.clone(), r)).collect();
    sessions
        .iter()
        .map(|s| {
            by_key.remove(&s.key()).unwrap_or_else(|| FeatureVector {
                key: s.key(),
                tz_offset_min: s.tz_offset_min,
                values: vec![f64::NAN; n_features],
                coverage: 0.0,
            })
        })
        .collect()
}
