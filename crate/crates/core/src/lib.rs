//! Mood estimation from smartphone sensing and web search queries.
//!
//! The pipeline has two learned stages. A random-forest sensor model
//! ([`smm`]) classifies 3-hour sessions into negative / neutral / positive
//! mood from the [`featurex`] catalog. Its predictions supplement sparse
//! self-reports when training a linear query model ([`qmm`]) over binary
//! search-term presence. The query model then scores whole populations,
//! which [`moodagg`] reduces to nation-wide and per-prefecture series that
//! [`analytics`] inspects. [`simgen`] produces synthetic cohorts with
//! ground truth so every stage can be checked end to end.

pub mod analytics;
pub mod corpus;
pub mod featurex;
pub mod moodagg;
pub mod qmm;
pub mod seed;
pub mod simgen;
pub mod smm;

pub use corpus::{MoodClass, Prefecture, Session, SessionKey};
pub use featurex::{FeatureRegistry, FeatureVector};
