use std::path::PathBuf;

use nationmood::analytics::AnalyticsError;
use nationmood::corpus::CorpusError;
use nationmood::moodagg::AggError;
use nationmood::qmm::QmmError;
use nationmood::simgen::SimError;
use nationmood::smm::SmmError;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_FINGERPRINT: i32 = 4;
pub const EXIT_DATA: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("{0}")]
    Fingerprint(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::MissingInput(_) => EXIT_MISSING_INPUT,
            CliError::Fingerprint(_) => EXIT_FINGERPRINT,
            CliError::Data(_) => EXIT_DATA,
            CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::MissingInput(_) => "missing-input",
            CliError::Fingerprint(_) => "fingerprint-mismatch",
            CliError::Data(_) => "invalid-data",
            CliError::Other(_) => "error",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {e}"))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(path)
            }
            CorpusError::Io { .. } => CliError::Other(e.to_string()),
            CorpusError::RegistryMismatch(m) => CliError::Fingerprint(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SmmError> for CliError {
    fn from(e: SmmError) -> Self {
        match e {
            SmmError::Fingerprint { .. } => CliError::Fingerprint(e.to_string()),
            SmmError::Io(_) => CliError::Other(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<QmmError> for CliError {
    fn from(e: QmmError) -> Self {
        match e {
            QmmError::Fingerprint { .. } => CliError::Fingerprint(e.to_string()),
            QmmError::Smm(s) => s.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<AggError> for CliError {
    fn from(e: AggError) -> Self {
        match e {
            AggError::Qmm(q) => q.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::MissingOracle(p) => CliError::MissingInput(p),
            SimError::Config(m) => CliError::Usage(m),
            SimError::Corpus(c) => c.into(),
            e => CliError::Other(e.to_string()),
        }
    }
}
