//! Seeded synthetic population with a known latent mood per session.
//!
//! Each user is simulated independently from a seed derived from the
//! master seed and the user index, so output does not depend on thread
//! count or on how users are batched.

mod config;
mod output;

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::{Normal, Poisson, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    sessionize, CaseCountRecord, CaseScope, Holiday, Likert, MoodClass, MoodReport, NetworkType, Prefecture,
    QueryEvent, ScreenEvent, SensorReading, SensorSample, Session, TimestampMs, UserProfile, WeatherKind, WeatherObs,
    DAY_MS, HOUR_MS, MINUTE_MS, PREFECTURE_NAMES, PREFECTURE_POPULATION_M,
};
use crate::seed;

pub use config::{CasePlan, SampleCounts, ShockSpec, SimConfig};
pub use output::{describe, nation_daily_means, read_oracle_sessions, write_corpus, SimFiles, SimSummary, WriteCounts, FILES};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("missing oracle file {0}")]
    MissingOracle(std::path::PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Ground truth for one emitted session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSession {
    pub user: String,
    pub window_start: TimestampMs,
    pub tz_offset_min: i32,
    pub prefecture: Option<Prefecture>,
    pub latent: f64,
    pub class: MoodClass,
    pub has_sensors: bool,
    pub has_queries: bool,
    pub reported: bool,
}

/// Class of a latent value: rounding to the nearest integer, so the
/// thresholds sit at ±0.5.
pub fn class_of(latent: f64) -> MoodClass {
    let r = latent.round();
    if r <= -1.0 {
        MoodClass::Negative
    } else if r >= 1.0 {
        MoodClass::Positive
    } else {
        MoodClass::Neutral
    }
}

/// Likert answer for a latent value: 4 + rounded latent, clamped to 1..=7.
pub fn likert_of(latent: f64) -> Likert {
    Likert::new((latent.round() as i64 + 4).clamp(1, 7)).expect("clamped into range")
}

/// One user's simulated events, each list in time order.
#[derive(Debug, Clone, Default)]
pub struct UserSim {
    pub profile: Option<UserProfile>,
    pub samples: Vec<SensorSample>,
    pub queries: Vec<QueryEvent>,
    pub reports: Vec<MoodReport>,
    pub oracle: Vec<OracleSession>,
}

pub fn user_id(index: usize) -> String {
    format!("u{index:06}")
}

pub struct Simulator {
    cfg: SimConfig,
    dates: Vec<NaiveDate>,
    slot_ms: i64,
    shocks: Vec<config::Shock>,
    case_drop: Vec<f64>,
    cases: Vec<CaseCountRecord>,
    prefectures: WeightedIndex<f64>,
    zipf: [Zipf<f64>; 4],
    queries_extra: Option<Poisson<f64>>,
    tokens_extra: Option<Poisson<f64>>,
}

const LEXICON_PREFIX: [&str; 4] = ["neg", "neu", "pos", "word"];

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("positive mean"))
}

fn normal(rng: &mut seed::Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let weights: Vec<f64> = if cfg.prefecture_weights.is_empty() {
            PREFECTURE_POPULATION_M.to_vec()
        } else {
            cfg.prefecture_weights.clone()
        };
        let prefectures = WeightedIndex::new(&weights).map_err(|e| SimError::Config(e.to_string()))?;
        let zipf = |n: usize| Zipf::new(n as f64, cfg.zipf_exponent).map_err(|e| SimError::Config(e.to_string()));
        let zipf = [
            zipf(cfg.lexicon_negative)?,
            zipf(cfg.lexicon_neutral)?,
            zipf(cfg.lexicon_positive)?,
            zipf(cfg.lexicon_common)?,
        ];
        let (case_drop, cases) = match &cfg.cases {
            Some(plan) => plant_cases(plan, cfg.seed),
            None => (vec![0.0; PREFECTURE_NAMES.len()], Vec::new()),
        };
        Ok(Simulator {
            cfg: cfg.clone(),
            dates: cfg.date_list(),
            slot_ms: cfg.slot_ms(),
            shocks: cfg.shocks_parsed()?,
            case_drop,
            cases,
            prefectures,
            zipf,
            queries_extra: poisson(cfg.queries_extra_mean),
            tokens_extra: poisson(cfg.tokens_extra_mean),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn case_counts(&self) -> &[CaseCountRecord] {
        &self.cases
    }

    pub fn holidays(&self) -> Vec<Holiday> {
        self.cfg.holidays.iter().map(|d| Holiday { date: *d, label: "holiday".into() }).collect()
    }

    /// Latent mood before the user effect and slot noise.
    pub fn population_mood(&self, date: NaiveDate, mid: TimestampMs, prefecture: Option<Prefecture>) -> f64 {
        let weekday = date.weekday().num_days_from_monday() as f64;
        let mut m = self.cfg.baseline - self.cfg.monday_dip * (6.0 - weekday) / 6.0;
        for s in &self.shocks {
            if mid >= s.start && mid < s.end && (s.scope.is_none() || s.scope == prefecture) {
                m += s.magnitude;
            }
        }
        if let (Some(plan), Some(p)) = (&self.cfg.cases, prefecture) {
            if plan.date == date {
                m -= self.case_drop[p.index()];
            }
        }
        m
    }

    fn token(&self, rng: &mut seed::Rng, latent: f64) -> String {
        let lexicon = if rng.random_bool(self.cfg.p_signal) {
            // Softmax over (negative, neutral, positive) with logits (-b m, 0, b m).
            let z = self.cfg.beta * latent;
            let (en, ep) = ((-z).exp(), z.exp());
            let u = rng.random::<f64>() * (en + 1.0 + ep);
            if u < en {
                0
            } else if u < en + 1.0 {
                1
            } else {
                2
            }
        } else {
            3
        };
        let k = self.zipf[lexicon].sample(rng) as usize;
        format!("{}{:03}", LEXICON_PREFIX[lexicon], k)
    }

    fn push_sensors(&self, rng: &mut seed::Rng, out: &mut Vec<SensorSample>, user: &str, t0: TimestampMs, class: MoodClass, home: (f64, f64), baro: f64) {
        let n = &self.cfg.samples;
        let slot = self.slot_ms;
        let mut at = |rng: &mut seed::Rng, reading: SensorReading| {
            let ts = t0 + rng.random_range(0..slot);
            out.push(SensorSample { user: user.to_string(), ts, reading });
        };
        let shift = self.cfg.gyro_shift * f64::from(class.value());
        for _ in 0..n.accelerometer {
            let v = [normal(rng, 0.0, 1.0), normal(rng, 0.0, 1.0), normal(rng, 9.8, 1.0)];
            at(rng, SensorReading::Accelerometer(v));
        }
        for _ in 0..n.gyroscope {
            let v = [normal(rng, shift, 1.0), normal(rng, shift, 1.0), normal(rng, shift, 1.0)];
            at(rng, SensorReading::Gyroscope(v));
        }
        for _ in 0..n.barometer {
            let p = normal(rng, baro, 0.5);
            at(rng, SensorReading::Barometer(p));
        }
        let mut level: f64 = rng.random_range(20.0..100.0);
        for _ in 0..n.battery {
            level = (level - rng.random_range(0.0..2.0)).clamp(0.0, 100.0);
            let charging = rng.random_bool(0.2);
            at(rng, SensorReading::Battery { level, charging });
        }
        for _ in 0..n.location {
            let (lat, lon) = if rng.random_bool(0.7) {
                (home.0 + rng.random_range(-1e-4..1e-4), home.1 + rng.random_range(-1e-4..1e-4))
            } else {
                (home.0 + rng.random_range(-0.05..0.05), home.1 + rng.random_range(-0.05..0.05))
            };
            at(rng, SensorReading::Location { lat, lon });
        }
        for _ in 0..n.network {
            let t = NetworkType::ALL[rng.random_range(0..NetworkType::ALL.len())];
            at(rng, SensorReading::Network(t));
        }
        for _ in 0..n.weather {
            let kind = WeatherKind::ALL[rng.random_range(0..WeatherKind::ALL.len())];
            let channels = [
                normal(rng, 15.0, 8.0),
                rng.random_range(20.0..100.0),
                normal(rng, 1010.0, 8.0),
                rng.random_range(0.0..15.0),
                rng.random_range(0.0..360.0),
                rng.random_range(0.0..100.0),
                normal(rng, 0.0, 2.0).max(0.0),
                0.0,
            ];
            at(rng, SensorReading::Weather(Box::new(WeatherObs { kind, channels })));
        }
        for _ in 0..n.screen {
            let e = ScreenEvent::ALL[rng.random_range(0..ScreenEvent::ALL.len())];
            at(rng, SensorReading::Screen(e));
        }
    }

    /// Simulate user `index`.
    pub fn user(&self, index: usize) -> UserSim {
        let cfg = &self.cfg;
        let mut rng = seed::sub_rng(seed::derive_str(cfg.seed, "users"), index as u64);
        let user = user_id(index);
        let prefecture = if rng.random_bool(cfg.p_unknown_prefecture) {
            None
        } else {
            Prefecture::from_index(self.prefectures.sample(&mut rng))
        };
        let effect = normal(&mut rng, 0.0, cfg.user_sd);
        let home = (rng.random_range(33.0..43.0), rng.random_range(130.0..142.0));
        let baro = normal(&mut rng, 1005.0, 3.0);
        let tz = cfg.tz_offset_min;
        let mut sim = UserSim {
            profile: Some(UserProfile { user: user.clone(), prefecture, tz_offset_min: tz }),
            ..Default::default()
        };
        let slots = (DAY_MS / self.slot_ms) as usize;
        let mut esm: Vec<(usize, TimestampMs)> = Vec::with_capacity(cfg.esm_hours.len());
        for &date in &self.dates {
            let day0 = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp_millis()
                - i64::from(tz) * MINUTE_MS;
            esm.clear();
            for &h in &cfg.esm_hours {
                let delay = rng.random_range(0..=i64::from(cfg.esm_delay_max_min)) * MINUTE_MS;
                let t = day0 + i64::from(h) * HOUR_MS + delay;
                esm.push((((t - day0) / self.slot_ms) as usize, t));
            }
            for k in 0..slots {
                if !rng.random_bool(cfg.p_active) {
                    continue;
                }
                let start = day0 + k as i64 * self.slot_ms;
                let latent = self.population_mood(date, start + self.slot_ms / 2, prefecture)
                    + effect
                    + normal(&mut rng, 0.0, cfg.noise_sd);
                let class = class_of(latent);
                let before = sim.samples.len();
                if cfg.sensors {
                    self.push_sensors(&mut rng, &mut sim.samples, &user, start, class, home, baro);
                    sim.samples[before..].sort_by_key(|s| s.ts);
                }
                let has_sensors = sim.samples.len() > before;
                let q_before = sim.queries.len();
                if rng.random_bool(cfg.p_query) {
                    let nq = 1 + self.queries_extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
                    for _ in 0..nq {
                        let nt = 1 + self.tokens_extra.as_ref().map_or(0, |p| (p.sample(&mut rng) as usize).min(3));
                        let words: Vec<String> = (0..nt).map(|_| self.token(&mut rng, latent)).collect();
                        let ts = start + rng.random_range(0..self.slot_ms);
                        sim.queries.push(QueryEvent { user: user.clone(), ts, raw_query: words.join(" ") });
                    }
                    sim.queries[q_before..].sort_by_key(|q| q.ts);
                }
                let has_queries = sim.queries.len() > q_before;
                let mut reported = false;
                for &(slot, t) in &esm {
                    if slot == k && rng.random_bool(cfg.esm_response) {
                        sim.reports.push(MoodReport { user: user.clone(), ts: t, likert: likert_of(latent) });
                        reported = true;
                    }
                }
                if has_sensors || has_queries || reported {
                    sim.oracle.push(OracleSession {
                        user: user.clone(),
                        window_start: start,
                        tz_offset_min: tz,
                        prefecture,
                        latent,
                        class,
                        has_sensors,
                        has_queries,
                        reported,
                    });
                }
            }
        }
        sim
    }

    /// Simulate a contiguous range of users in parallel; output in index order.
    pub fn users(&self, range: std::ops::Range<usize>) -> Vec<UserSim> {
        range.into_par_iter().map(|i| self.user(i)).collect()
    }
}

/// Per-prefecture drops and case records for a case plan.
fn plant_cases(plan: &CasePlan, master: u64) -> (Vec<f64>, Vec<CaseCountRecord>) {
    let mut rng = seed::rng(seed::derive_str(master, "cases"));
    let max_pop = PREFECTURE_POPULATION_M.iter().copied().fold(0.0, f64::max);
    let counts: Vec<u64> = PREFECTURE_POPULATION_M
        .iter()
        .map(|p| {
            let level = plan.max_cases as f64 * p / max_pop;
            (level * normal(&mut rng, 0.0, plan.spread).exp()).round() as u64
        })
        .collect();
    let top = counts.iter().copied().max().unwrap_or(0);
    let drops = counts
        .iter()
        .map(|c| if top == 0 { 0.0 } else { plan.max_drop * *c as f64 / top as f64 })
        .collect();
    let mut records: Vec<CaseCountRecord> = counts
        .iter()
        .enumerate()
        .map(|(i, c)| CaseCountRecord {
            date: plan.date,
            scope: CaseScope::Prefecture(Prefecture::from_index(i).expect("index in range")),
            new_cases: *c,
        })
        .collect();
    records.insert(0, CaseCountRecord { date: plan.date, scope: CaseScope::Nation, new_cases: counts.iter().sum() });
    (drops, records)
}

/// Everything a simulation emits, held in memory.
#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    pub profiles: Vec<UserProfile>,
    pub samples: Vec<SensorSample>,
    pub queries: Vec<QueryEvent>,
    pub reports: Vec<MoodReport>,
    pub oracle: Vec<OracleSession>,
    pub cases: Vec<CaseCountRecord>,
    pub holidays: Vec<Holiday>,
}

pub fn generate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    let sim = Simulator::new(cfg)?;
    let mut out = SimOutput { cases: sim.case_counts().to_vec(), holidays: sim.holidays(), ..Default::default() };
    for u in sim.users(0..cfg.n_users) {
        out.profiles.extend(u.profile);
        out.samples.extend(u.samples);
        out.queries.extend(u.queries);
        out.reports.extend(u.reports);
        out.oracle.extend(u.oracle);
    }
    Ok(out)
}

/// Sessions, aligned one-to-one with their oracle records.
#[derive(Debug, Clone, Default)]
pub struct SimSessions {
    pub sessions: Vec<Session>,
    pub oracle: Vec<OracleSession>,
    pub profiles: Vec<UserProfile>,
    pub cases: Vec<CaseCountRecord>,
    pub holidays: Vec<Holiday>,
}

/// Simulate and sessionize user by user, without materializing the flat
/// event logs. Sessions use the slot length as the window.
pub fn generate_sessions(cfg: &SimConfig) -> Result<SimSessions, SimError> {
    let sim = Simulator::new(cfg)?;
    let window = sim.slot_ms;
    let per_user: Vec<(Vec<Session>, UserSim)> = (0..cfg.n_users)
        .into_par_iter()
        .map(|i| {
            let mut u = sim.user(i);
            let profile = u.profile.clone().into_iter().collect::<Vec<_>>();
            let (sessions, _) = sessionize(
                std::mem::take(&mut u.samples),
                std::mem::take(&mut u.reports),
                std::mem::take(&mut u.queries),
                &profile,
                window,
            );
            (sessions, u)
        })
        .collect();
    let mut out = SimSessions { cases: sim.case_counts().to_vec(), holidays: sim.holidays(), ..Default::default() };
    for (sessions, u) in per_user {
        debug_assert_eq!(sessions.len(), u.oracle.len());
        out.sessions.extend(sessions);
        out.oracle.extend(u.oracle);
        out.profiles.extend(u.profile);
    }
    Ok(out)
}
