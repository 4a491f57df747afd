use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::corpus::{parse_instant, Prefecture, TimestampMs, DAY_MS, DEFAULT_TZ_OFFSET_MIN, MINUTE_MS, PREFECTURE_NAMES};

/// A latent-mood shift applied to every session whose midpoint falls in
/// `[start, start + duration_hours)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSpec {
    /// RFC 3339 instant, e.g. `2020-02-16T08:30:00+09:00`.
    pub start: String,
    pub magnitude: f64,
    pub duration_hours: f64,
    /// `nation` or a prefecture name.
    #[serde(default = "nation")]
    pub scope: String,
}

fn nation() -> String {
    "nation".into()
}

/// Regional case counts on one date, with a mood drop proportional to
/// each prefecture's count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasePlan {
    pub date: NaiveDate,
    /// Count for a prefecture of the largest population at median noise.
    pub max_cases: u64,
    /// Latent drop of the prefecture with the most cases.
    pub max_drop: f64,
    /// Log-normal spread of counts around the population-proportional level.
    pub spread: f64,
}

/// Sensor readings drawn per active session, by channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleCounts {
    pub accelerometer: usize,
    pub gyroscope: usize,
    pub barometer: usize,
    pub battery: usize,
    pub location: usize,
    pub network: usize,
    pub weather: usize,
    pub screen: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts {
            accelerometer: 24,
            gyroscope: 24,
            barometer: 6,
            battery: 6,
            location: 16,
            network: 2,
            weather: 2,
            screen: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_users: usize,
    pub start_date: NaiveDate,
    pub days: u32,
    /// When non-empty, replaces `start_date` and `days`.
    pub dates: Vec<NaiveDate>,
    /// Length of a simulated activity slot; must divide a day.
    pub slot_minutes: u32,
    pub tz_offset_min: i32,
    /// Probability that a user is active in a given slot.
    pub p_active: f64,
    /// Emit sensor readings for active slots.
    pub sensors: bool,
    pub p_unknown_prefecture: f64,
    /// Relative user counts per prefecture; empty means population-proportional.
    pub prefecture_weights: Vec<f64>,

    pub baseline: f64,
    pub user_sd: f64,
    pub noise_sd: f64,
    /// Weekly ramp depth: Monday sits `monday_dip` below Sunday, rising
    /// linearly through the week.
    pub monday_dip: f64,
    pub shocks: Vec<ShockSpec>,
    pub cases: Option<CasePlan>,
    pub holidays: Vec<NaiveDate>,

    /// Local hours of the daily self-report prompts.
    pub esm_hours: Vec<u32>,
    pub esm_response: f64,
    pub esm_delay_max_min: u32,

    /// Per-axis gyroscope mean shift per unit of mood class.
    pub gyro_shift: f64,
    pub samples: SampleCounts,

    pub p_query: f64,
    /// Extra queries per querying session beyond the first (Poisson mean).
    pub queries_extra_mean: f64,
    /// Extra tokens per query beyond the first (Poisson mean), capped at 3 extra.
    pub tokens_extra_mean: f64,
    /// Probability that a token comes from a mood lexicon.
    pub p_signal: f64,
    /// Slope of the mood-lexicon choice in latent mood.
    pub beta: f64,
    pub lexicon_positive: usize,
    pub lexicon_negative: usize,
    pub lexicon_neutral: usize,
    pub lexicon_common: usize,
    pub zipf_exponent: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 42,
            n_users: 60,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date"),
            days: 28,
            dates: Vec::new(),
            slot_minutes: 180,
            tz_offset_min: DEFAULT_TZ_OFFSET_MIN,
            p_active: 0.7,
            sensors: true,
            p_unknown_prefecture: 0.02,
            prefecture_weights: Vec::new(),
            baseline: 0.3,
            user_sd: 0.5,
            noise_sd: 0.9,
            monday_dip: 0.3,
            shocks: Vec::new(),
            cases: None,
            holidays: Vec::new(),
            esm_hours: vec![8, 10, 12, 14, 16, 18],
            esm_response: 0.3,
            esm_delay_max_min: 10,
            gyro_shift: 0.6,
            samples: SampleCounts::default(),
            p_query: 0.6,
            queries_extra_mean: 0.5,
            tokens_extra_mean: 0.6,
            p_signal: 0.5,
            beta: 1.5,
            lexicon_positive: 300,
            lexicon_negative: 300,
            lexicon_neutral: 200,
            lexicon_common: 1000,
            zipf_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Shock {
    pub start: TimestampMs,
    pub end: TimestampMs,
    pub magnitude: f64,
    pub scope: Option<Prefecture>,
}

impl SimConfig {
    /// Simulated local dates, in order.
    pub fn date_list(&self) -> Vec<NaiveDate> {
        if !self.dates.is_empty() {
            let mut d = self.dates.clone();
            d.sort_unstable();
            d.dedup();
            return d;
        }
        self.start_date.iter_days().take(self.days as usize).collect()
    }

    pub fn slot_ms(&self) -> i64 {
        i64::from(self.slot_minutes) * MINUTE_MS
    }

    pub(super) fn shocks_parsed(&self) -> Result<Vec<Shock>, SimError> {
        self.shocks
            .iter()
            .map(|s| {
                let (start, _) = parse_instant(&s.start).map_err(|e| SimError::Config(format!("shock start: {e}")))?;
                let scope = if s.scope.eq_ignore_ascii_case("nation") {
                    None
                } else {
                    Some(s.scope.parse::<Prefecture>().map_err(|e| SimError::Config(e.to_string()))?)
                };
                if !(s.duration_hours >= 0.0 && s.magnitude.is_finite()) {
                    return Err(SimError::Config("shock duration must be >= 0 and magnitude finite".into()));
                }
                let end = start + (s.duration_hours * 3_600_000.0).round() as i64;
                Ok(Shock { start, end, magnitude: s.magnitude, scope })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if self.date_list().is_empty() {
            return bad("no dates to simulate".into());
        }
        let slot = self.slot_ms();
        if slot <= 0 || DAY_MS % slot != 0 {
            return bad(format!("slot_minutes {} must divide a day", self.slot_minutes));
        }
        if !(-720..=840).contains(&self.tz_offset_min) {
            return bad(format!("tz_offset_min {} outside [-720, 840]", self.tz_offset_min));
        }
        for (name, p) in [
            ("p_active", self.p_active),
            ("p_unknown_prefecture", self.p_unknown_prefecture),
            ("esm_response", self.esm_response),
            ("p_query", self.p_query),
            ("p_signal", self.p_signal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        for (name, v) in [
            ("user_sd", self.user_sd),
            ("noise_sd", self.noise_sd),
            ("queries_extra_mean", self.queries_extra_mean),
            ("tokens_extra_mean", self.tokens_extra_mean),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [("baseline", self.baseline), ("monday_dip", self.monday_dip), ("gyro_shift", self.gyro_shift), ("beta", self.beta)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.lexicon_positive == 0 || self.lexicon_negative == 0 || self.lexicon_neutral == 0 || self.lexicon_common == 0 {
            return bad("every query lexicon needs at least one token".into());
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be finite and >= 0".into());
        }
        if self.esm_hours.iter().any(|h| *h > 23) || self.esm_delay_max_min > 59 {
            return bad("esm_hours must be in 0..=23 and esm_delay_max_min <= 59".into());
        }
        if !self.prefecture_weights.is_empty() {
            let w = &self.prefecture_weights;
            if w.len() != PREFECTURE_NAMES.len() || w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
                return bad(format!("prefecture_weights needs {} non-negative values with a positive sum", PREFECTURE_NAMES.len()));
            }
        }
        if let Some(c) = &self.cases {
            if !(c.max_drop.is_finite() && c.spread >= 0.0 && c.spread.is_finite()) {
                return bad("cases: max_drop must be finite and spread >= 0".into());
            }
        }
        self.shocks_parsed()?;
        Ok(())
    }
}
