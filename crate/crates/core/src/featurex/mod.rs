//! Session feature extraction over the fixed 136-feature catalog.

mod extract;
mod registry;
pub mod stats;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{format_instant, parse_instant, CorpusError, SensorKind, Session, SessionKey};

pub use extract::{
    extract_barometer, extract_battery, extract_imu, extract_location, extract_network, extract_screen,
    extract_weather, grid_cell, haversine_m, Window,
};
pub use registry::{FeatureRegistry, FeatureSpec, FEATURE_COUNT, GROUP_SIZES, STAT_NAMES};

/// One session's features in registry order. NaN marks missing data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub key: SessionKey,
    pub tz_offset_min: i32,
    pub values: Vec<f64>,
    /// Share of the eight sensor groups with at least one reading.
    pub coverage: f64,
}

/// Compute the full feature vector of a session.
pub fn assemble(session: &Session, registry: &FeatureRegistry) -> FeatureVector {
    debug_assert_eq!(registry.len(), FEATURE_COUNT);
    let s = &session.sensors;
    let window = Window { start: session.window_start, end: session.window_end() };
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    let mut present = 0usize;
    for (kind, _) in GROUP_SIZES {
        let (block, has_data): (Vec<f64>, bool) = match kind {
            SensorKind::Accelerometer => (extract_imu(&s.accelerometer).to_vec(), !s.accelerometer.is_empty()),
            SensorKind::Gyroscope => (extract_imu(&s.gyroscope).to_vec(), !s.gyroscope.is_empty()),
            SensorKind::Barometer => (extract_barometer(&s.barometer).to_vec(), !s.barometer.is_empty()),
            SensorKind::Battery => (extract_battery(&s.battery, window).to_vec(), !s.battery.is_empty()),
            SensorKind::Location => (extract_location(&s.location, window).to_vec(), !s.location.is_empty()),
            SensorKind::Network => (extract_network(&s.network, window).to_vec(), !s.network.is_empty()),
            SensorKind::Weather => (extract_weather(&s.weather).to_vec(), !s.weather.is_empty()),
            SensorKind::Screen => (extract_screen(&s.screen, window).to_vec(), !s.screen.is_empty()),
        };
        present += usize::from(has_data);
        values.extend(block);
    }
    FeatureVector {
        key: session.key(),
        tz_offset_min: session.tz_offset_min,
        values,
        coverage: present as f64 / GROUP_SIZES.len() as f64,
    }
}

/// Extract features for many sessions in parallel; output order matches input.
pub fn assemble_all(sessions: &[Session], registry: &FeatureRegistry) -> Vec<FeatureVector> {
    sessions.par_iter().map(|s| assemble(s, registry)).collect()
}

/// Per-feature medians learned from a training split, used to fill NaNs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Imputer {
    pub medians: Vec<f64>,
}

impl Imputer {
    /// Medians over finite values; a feature with no finite training value imputes to 0.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n_features: usize) -> Self {
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_features];
        for row in rows {
            for (col, v) in columns.iter_mut().zip(row) {
                if v.is_finite() {
                    col.push(*v);
                }
            }
        }
        let medians = columns.iter().map(|c| if c.is_empty() { 0.0 } else { stats::median(c) }).collect();
        Imputer { medians }
    }

    pub fn apply(&self, values: &mut [f64]) {
        for (v, m) in values.iter_mut().zip(&self.medians) {
            if !v.is_finite() {
                *v = *m;
            }
        }
    }

    pub fn applied(&self, values: &[f64]) -> Vec<f64> {
        let mut v = values.to_vec();
        self.apply(&mut v);
        v
    }
}

/// Fill NaNs in every vector from training medians.
pub fn impute(vectors: &mut [FeatureVector], imputer: &Imputer) {
    for v in vectors {
        imputer.apply(&mut v.values);
    }
}

/// Write feature rows as CSV: `user,window_start,coverage,<feature names...>`.
pub fn write_features<W: Write>(w: W, registry: &FeatureRegistry, rows: &[FeatureVector]) -> Result<(), CorpusError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["user".to_string(), "window_start".to_string(), "coverage".to_string()];
    header.extend(registry.names().map(str::to_string));
    wr.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for r in rows {
        rec.clear();
        rec.push(r.key.user.clone());
        rec.push(format_instant(r.key.window_start, r.tz_offset_min));
        rec.push(r.coverage.to_string());
        rec.extend(r.values.iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_features(path: &Path, registry: &FeatureRegistry) -> Result<Vec<FeatureVector>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = ["user", "window_start", "coverage"].into_iter().chain(registry.names()).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CorpusError::RegistryMismatch(format!(
            "{}: feature header does not match registry {}",
            path.display(),
            registry.fingerprint
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| CorpusError::Validation(format!("{}:{}: {m}", path.display(), i + 2));
        let (window_start, tz) = parse_instant(&rec[1]).map_err(bad)?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}")));
        let coverage = num(&rec[2])?;
        let values = rec.iter().skip(3).map(num).collect::<Result<Vec<f64>, _>>()?;
        out.push(FeatureVector {
            key: SessionKey { user: rec[0].to_string(), window_start },
            tz_offset_min: tz,
            values,
            coverage,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SensorBundle, HOUR_MS};

    fn session(sensors: SensorBundle) -> Session {
        Session {
            user: "u1".into(),
            window_start: 0,
            window_ms: 3 * HOUR_MS,
            tz_offset_min: 540,
            sensors,
            queries: vec![],
            reports: vec![],
        }
    }

    #[test]
    fn accelerometer_only_session() {
        let mut b = SensorBundle::default();
        b.accelerometer = (0..20).map(|i| (i * 1000, [0.1 * i as f64, 0.2, 9.8])).collect();
        let fv = assemble(&session(b), FeatureRegistry::standard());
        assert_eq!(fv.values.len(), 136);
        assert!(fv.values[..23].iter().all(|v| v.is_finite()));
        assert!(fv.values[23..].iter().all(|v| v.is_nan()));
        assert_eq!(fv.coverage, 1.0 / 8.0);
    }

    #[test]
    fn empty_session() {
        let fv = assemble(&session(SensorBundle::default()), FeatureRegistry::standard());
        assert!(fv.values.iter().all(|v| v.is_nan()));
        assert_eq!(fv.coverage, 0.0);
    }

    #[test]
    fn imputation_rules() {
        let rows: Vec<Vec<f64>> = vec![vec![3.0, f64::NAN, 1.0], vec![4.0, f64::NAN, 2.0]];
        let imp = Imputer::fit(rows.iter().map(|r| r.as_slice()), 3);
        assert_eq!(imp.medians, vec![3.5, 0.0, 1.5]);
        let v = imp.applied(&[f64::NAN, f64::NAN, 7.0]);
        assert_eq!(v, vec![3.5, 0.0, 7.0]);
    }

    #[test]
    fn csv_round_trip() {
        let mut b = SensorBundle::default();
        b.barometer = vec![(10, 1013.25), (20, 1012.0)];
        let fv = assemble(&session(b), FeatureRegistry::standard());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_features(std::fs::File::create(&path).unwrap(), FeatureRegistry::standard(), &[fv.clone()]).unwrap();
        let back = read_features(&path, FeatureRegistry::standard()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].key, fv.key);
        for (a, b) in back[0].values.iter().zip(&fv.values) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
}
