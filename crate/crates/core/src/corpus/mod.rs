//! Input corpus: typed records, file parsers and 3-hour sessionization.

mod io;
mod prefecture;
mod session;
mod types;

use std::path::PathBuf;

pub use io::{
    encode_sensor_line, parse_case_counts, parse_holidays, parse_mood_reports, parse_profiles,
    parse_query_log, parse_sensor_log, read_case_counts, read_sensor_log, write_case_counts,
    write_holidays, write_mood_reports, write_profiles, write_query_log, write_sensor_log,
    BadLine, MoodReportWriter, ParseOptions, Parsed, QueryLogWriter,
};
pub use prefecture::{
    parse_residence, residence_label, Prefecture, UnknownPrefecture, PREFECTURE_NAMES,
    PREFECTURE_POPULATION_M,
};
pub use session::{
    format_instant, local_date, parse_instant, sessionize, window_start_for, SensorBundle, Session, SessionKey, SessionizeReport,
    DEFAULT_WINDOW_MS,
};
pub use types::*;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {bad} of {total} lines invalid (limit {limit:.2}%), first bad lines: {lines:?}")]
    TooManyBadLines { path: PathBuf, bad: usize, total: usize, limit: f64, lines: Vec<usize> },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    RegistryMismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
