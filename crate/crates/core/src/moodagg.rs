//! Population mood series: per-session query scores averaged per user,
//! then across users, by time bucket and geographic scope.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    format_instant, local_date, parse_instant, window_start_for, Prefecture, QueryEvent, Session, SessionKey, TimestampMs,
    UserProfile, DAY_MS, DEFAULT_TZ_OFFSET_MIN, HOUR_MS,
};
use crate::qmm::{session_tokens, QmmError, QmmModel, Tokenizer, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum AggError {
    #[error(transparent)]
    Qmm(#[from] QmmError),
    #[error("baseline mean of {scope} is zero; ratio undefined")]
    ZeroBaseline { scope: Scope },
    #[error("no scope has data on any baseline date")]
    NoBaseline,
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSession {
    pub key: SessionKey,
    pub tz_offset_min: i32,
    pub score: f64,
}

/// Score every session that has at least one query. Output order matches
/// input order; sessions without queries are dropped.
pub fn score_sessions(
    model: &QmmModel,
    vocabulary: &Vocabulary,
    tokenizer: &dyn Tokenizer,
    sessions: &[Session],
) -> Result<Vec<ScoredSession>, AggError> {
    model.check_vocabulary(vocabulary)?;
    Ok(sessions
        .par_iter()
        .filter(|s| !s.queries.is_empty())
        .map(|s| ScoredSession {
            key: s.key(),
            tz_offset_min: s.tz_offset_min,
            score: model.score_active(&vocabulary.active(&session_tokens(s, tokenizer))),
        })
        .collect())
}

/// Score straight from a query log, without building full sessions.
/// Queries are grouped into the same windows `sessionize` would use, so
/// the result equals [`score_sessions`] over the sessionized log.
pub fn score_queries(
    model: &QmmModel,
    vocabulary: &Vocabulary,
    tokenizer: &dyn Tokenizer,
    mut queries: Vec<QueryEvent>,
    profiles: &[UserProfile],
    window_ms: i64,
) -> Result<Vec<ScoredSession>, AggError> {
    model.check_vocabulary(vocabulary)?;
    if window_ms <= 0 || DAY_MS % window_ms != 0 {
        return Err(AggError::Invalid(format!("window {window_ms} ms does not divide a day")));
    }
    let tz: HashMap<&str, i32> = profiles.iter().map(|p| (p.user.as_str(), p.tz_offset_min)).collect();
    queries.par_sort_by(|a, b| a.user.cmp(&b.user).then(a.ts.cmp(&b.ts)));
    let mut groups: Vec<(usize, usize, i32, TimestampMs)> = Vec::new();
    let mut i = 0;
    while i < queries.len() {
        let offset = tz.get(queries[i].user.as_str()).copied().unwrap_or(DEFAULT_TZ_OFFSET_MIN);
        let start = window_start_for(queries[i].ts, offset, window_ms);
        let mut j = i + 1;
        while j < queries.len() && queries[j].user == queries[i].user && queries[j].ts < start + window_ms {
            j += 1;
        }
        groups.push((i, j, offset, start));
        i = j;
    }
    Ok(groups
        .par_iter()
        .map(|&(i, j, offset, start)| {
            let tokens: Vec<String> = queries[i..j].iter().flat_map(|q| tokenizer.tokenize(&q.raw_query)).collect();
            ScoredSession {
                key: SessionKey { user: queries[i].user.clone(), window_start: start },
                tz_offset_min: offset,
                score: model.score_active(&vocabulary.active(&tokens)),
            }
        })
        .collect())
}

pub fn write_scores<W: Write>(w: W, scores: &[ScoredSession]) -> Result<(), AggError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["user", "window_start", "score"])?;
    for s in scores {
        wr.write_record([s.key.user.as_str(), &format_instant(s.key.window_start, s.tz_offset_min), &s.score.to_string()])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores<R: Read>(r: R) -> Result<Vec<ScoredSession>, AggError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| AggError::Invalid(format!("scores row {}: {m}", i + 2));
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let (window_start, tz) = parse_instant(&rec[1]).map_err(bad)?;
        let score: f64 = rec[2].parse().map_err(|e| bad(format!("bad score {:?}: {e}", &rec[2])))?;
        if !score.is_finite() {
            return Err(bad("non-finite score".into()));
        }
        out.push(ScoredSession { key: SessionKey { user: rec[0].to_string(), window_start }, tz_offset_min: tz, score });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Daily,
    #[serde(rename = "3h")]
    ThreeHour,
    #[serde(rename = "1h")]
    Hourly,
}

impl Granularity {
    /// Bucket length for sub-daily granularities.
    pub fn bucket_ms(self) -> i64 {
        match self {
            Granularity::Daily => DAY_MS,
            Granularity::ThreeHour => 3 * HOUR_MS,
            Granularity::Hourly => HOUR_MS,
        }
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "daily" => Ok(Granularity::Daily),
            "3h" => Ok(Granularity::ThreeHour),
            "1h" => Ok(Granularity::Hourly),
            _ => Err(format!("unknown granularity {s:?} (expected daily, 3h or 1h)")),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Daily => "daily",
            Granularity::ThreeHour => "3h",
            Granularity::Hourly => "1h",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Nation,
    Prefecture(Prefecture),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Nation => f.write_str("nation"),
            Scope::Prefecture(p) => f.write_str(p.name()),
        }
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("nation") {
            return Ok(Scope::Nation);
        }
        s.parse::<Prefecture>().map(Scope::Prefecture).map_err(|e| e.to_string())
    }
}

/// A local calendar day, or the UTC start instant of a sub-daily bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    Day(NaiveDate),
    Start(TimestampMs),
}

impl Bucket {
    /// ISO date, or an RFC 3339 instant rendered at `offset_min`.
    pub fn format(&self, offset_min: i32) -> String {
        match self {
            Bucket::Day(d) => d.to_string(),
            Bucket::Start(ms) => format_instant(*ms, offset_min),
        }
    }

    pub fn parse(s: &str) -> Result<(Bucket, Option<i32>), String> {
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok((Bucket::Day(d), None));
        }
        parse_instant(s).map(|(ms, off)| (Bucket::Start(ms), Some(off)))
    }

    /// Local calendar date of the bucket.
    pub fn date(&self, offset_min: i32) -> NaiveDate {
        match self {
            Bucket::Day(d) => *d,
            Bucket::Start(ms) => local_date(*ms, offset_min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodScorePoint {
    pub scope: Scope,
    pub bucket: Bucket,
    pub mean_score: f64,
    pub user_count: usize,
}

/// Bucket a session falls in. Sub-daily buckets align to local midnight in
/// the session's own offset; a session longer than the bucket lands in the
/// bucket containing its start.
pub fn bucket_of(window_start: TimestampMs, tz_offset_min: i32, granularity: Granularity) -> Bucket {
    match granularity {
        Granularity::Daily => Bucket::Day(local_date(window_start, tz_offset_min)),
        g => Bucket::Start(window_start_for(window_start, tz_offset_min, g.bucket_ms())),
    }
}

/// Mergeable partial aggregate. Holds every (window, score) contribution
/// per scope, bucket and user so the final reduction can run in a fixed
/// order no matter how the input was sharded.
#[derive(Debug, Clone, Default)]
pub struct Aggregator {
    granularity: Option<Granularity>,
    cells: BTreeMap<(Scope, Bucket), BTreeMap<String, Vec<(TimestampMs, f64)>>>,
}

impl Aggregator {
    pub fn new(granularity: Granularity) -> Self {
        Aggregator { granularity: Some(granularity), cells: BTreeMap::new() }
    }

    /// Add one scored session. Users with a known prefecture also feed
    /// that prefecture's series.
    pub fn add(&mut self, s: &ScoredSession, prefecture: Option<Prefecture>) {
        let g = self.granularity.expect("aggregator built with Aggregator::new");
        let bucket = bucket_of(s.key.window_start, s.tz_offset_min, g);
        let scopes = std::iter::once(Scope::Nation).chain(prefecture.map(Scope::Prefecture));
        for scope in scopes {
            self.cells
                .entry((scope, bucket))
                .or_default()
                .entry(s.key.user.clone())
                .or_default()
                .push((s.key.window_start, s.score));
        }
    }

    pub fn merge(&mut self, other: Aggregator) {
        for (k, users) in other.cells {
            let cell = self.cells.entry(k).or_default();
            for (u, mut v) in users {
                cell.entry(u).or_default().append(&mut v);
            }
        }
    }

    /// Two-level mean per (scope, bucket), sorted by scope then bucket.
    pub fn finish(self) -> Vec<MoodScorePoint> {
        self.cells
            .into_iter()
            .map(|((scope, bucket), users)| {
                let mut total = 0.0;
                for mut v in users.values().cloned() {
                    v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                    total += v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
                }
                MoodScorePoint { scope, bucket, mean_score: total / users.len() as f64, user_count: users.len() }
            })
            .collect()
    }
}

/// Aggregate scores into nation and per-prefecture series. Users missing
/// from `profiles`, or with an unknown prefecture, count toward the nation only.
pub fn aggregate(scores: &[ScoredSession], profiles: &[UserProfile], granularity: Granularity) -> Vec<MoodScorePoint> {
    let pref: HashMap<&str, Option<Prefecture>> = profiles.iter().map(|p| (p.user.as_str(), p.prefecture)).collect();
    let chunk = scores.len().div_ceil(rayon::current_num_threads().max(1)).max(1024);
    scores
        .par_chunks(chunk)
        .map(|part| {
            let mut a = Aggregator::new(granularity);
            for s in part {
                a.add(s, pref.get(s.key.user.as_str()).copied().flatten());
            }
            a
        })
        .reduce(|| Aggregator::new(granularity), |mut a, b| {
            a.merge(b);
            a
        })
        .finish()
}

/// Render offset for sub-daily bucket instants in output files.
pub const DISPLAY_OFFSET_MIN: i32 = DEFAULT_TZ_OFFSET_MIN;

pub fn write_points<W: Write>(w: W, points: &[MoodScorePoint]) -> Result<(), AggError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["scope", "bucket", "mean_score", "user_count"])?;
    for p in points {
        wr.write_record([
            p.scope.to_string(),
            p.bucket.format(DISPLAY_OFFSET_MIN),
            p.mean_score.to_string(),
            p.user_count.to_string(),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_points<R: Read>(r: R) -> Result<Vec<MoodScorePoint>, AggError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| AggError::Invalid(format!("aggregate row {}: {m}", i + 2));
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let scope: Scope = rec[0].parse().map_err(bad)?;
        let (bucket, _) = Bucket::parse(&rec[1]).map_err(bad)?;
        let mean_score: f64 = rec[2].parse().map_err(|e| bad(format!("bad mean {:?}: {e}", &rec[2])))?;
        let user_count: usize = rec[3].parse().map_err(|e| bad(format!("bad count {:?}: {e}", &rec[3])))?;
        if user_count == 0 || !mean_score.is_finite() {
            return Err(bad("empty or non-finite bucket".into()));
        }
        out.push(MoodScorePoint { scope, bucket, mean_score, user_count });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelativeMode {
    #[default]
    Ratio,
    Difference,
}

impl FromStr for RelativeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ratio" => Ok(RelativeMode::Ratio),
            "difference" => Ok(RelativeMode::Difference),
            _ => Err(format!("unknown relative mode {s:?} (expected ratio or difference)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePoint {
    pub scope: Scope,
    pub bucket: Bucket,
    pub value: f64,
    pub baseline_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelativeSeries {
    pub points: Vec<RelativePoint>,
    /// Scopes without any point on a baseline date.
    pub skipped: Vec<Scope>,
}

/// Express each scope's series relative to the mean of its own points on
/// the baseline dates.
pub fn relative_series(
    points: &[MoodScorePoint],
    baseline: &BTreeSet<NaiveDate>,
    mode: RelativeMode,
) -> Result<RelativeSeries, AggError> {
    if baseline.is_empty() {
        return Err(AggError::Invalid("baseline has no dates".into()));
    }
    let mut by_scope: BTreeMap<Scope, Vec<&MoodScorePoint>> = BTreeMap::new();
    for p in points {
        by_scope.entry(p.scope).or_default().push(p);
    }
    let mut out = RelativeSeries::default();
    for (scope, pts) in by_scope {
        let base: Vec<f64> = pts
            .iter()
            .filter(|p| baseline.contains(&p.bucket.date(DISPLAY_OFFSET_MIN)))
            .map(|p| p.mean_score)
            .collect();
        if base.is_empty() {
            log::warn!("{scope}: no data on baseline dates; skipped");
            out.skipped.push(scope);
            continue;
        }
        let m = base.iter().sum::<f64>() / base.len() as f64;
        if mode == RelativeMode::Ratio && m == 0.0 {
            return Err(AggError::ZeroBaseline { scope });
        }
        for p in pts {
            let value = match mode {
                RelativeMode::Ratio => p.mean_score / m,
                RelativeMode::Difference => p.mean_score - m,
            };
            out.points.push(RelativePoint { scope, bucket: p.bucket, value, baseline_mean: m });
        }
    }
    if out.points.is_empty() {
        return Err(AggError::NoBaseline);
    }
    Ok(out)
}

pub fn write_relative<W: Write>(w: W, series: &RelativeSeries) -> Result<(), AggError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["scope", "bucket", "value", "baseline_mean"])?;
    for p in &series.points {
        wr.write_record([
            p.scope.to_string(),
            p.bucket.format(DISPLAY_OFFSET_MIN),
            p.value.to_string(),
            p.baseline_mean.to_string(),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(user: &str, ts: TimestampMs, score: f64) -> ScoredSession {
        ScoredSession { key: SessionKey { user: user.into(), window_start: ts }, tz_offset_min: 540, score }
    }

    fn profile(user: &str, pref: Option<&str>) -> UserProfile {
        UserProfile { user: user.into(), prefecture: pref.map(|p| p.parse().unwrap()), tz_offset_min: 540 }
    }

    #[test]
    fn two_users_mean() {
        let pts = aggregate(&[scored("a", 0, 1.0), scored("b", 0, 3.0)], &[], Granularity::Daily);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].mean_score, 2.0);
        assert_eq!(pts[0].user_count, 2);
    }

    #[test]
    fn user_mean_first() {
        let s = [scored("a", 0, 0.0), scored("a", 3 * HOUR_MS, 4.0), scored("b", 0, 1.0)];
        let pts = aggregate(&s, &[], Granularity::Daily);
        assert_eq!(pts[0].mean_score, 1.5);
        assert_eq!(pts[0].user_count, 2);
    }

    #[test]
    fn unknown_prefecture_counts_for_nation_only() {
        let s = [scored("a", 0, 1.0), scored("b", 0, 3.0)];
        let pts = aggregate(&s, &[profile("a", Some("Tokyo")), profile("b", None)], Granularity::ThreeHour);
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].scope, Scope::Nation);
        assert_eq!(pts[0].user_count, 2);
        assert_eq!(pts[1].scope, Scope::Prefecture("Tokyo".parse().unwrap()));
        assert_eq!(pts[1].mean_score, 1.0);
    }

    #[test]
    fn relative_modes() {
        let d = |n| NaiveDate::from_ymd_opt(2020, 1, n).unwrap();
        let pts: Vec<MoodScorePoint> = [(1, 2.0), (2, 4.0), (5, 3.0)]
            .iter()
            .map(|&(day, v)| MoodScorePoint { scope: Scope::Nation, bucket: Bucket::Day(d(day)), mean_score: v, user_count: 1 })
            .collect();
        let base: BTreeSet<NaiveDate> = [d(1), d(2)].into();
        let r = relative_series(&pts, &base, RelativeMode::Ratio).unwrap();
        assert_eq!(r.points[2].value, 1.0);
        let r = relative_series(&pts, &base, RelativeMode::Difference).unwrap();
        assert_eq!(r.points[2].value, 0.0);
        let zero: Vec<MoodScorePoint> = pts.iter().map(|p| MoodScorePoint { mean_score: 0.0, ..p.clone() }).collect();
        assert!(relative_series(&zero, &base, RelativeMode::Ratio).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let s = vec![scored("a", 1_577_804_400_000, 2.611)];
        let mut buf = Vec::new();
        write_scores(&mut buf, &s).unwrap();
        assert_eq!(read_scores(buf.as_slice()).unwrap(), s);
        let pts = aggregate(&s, &[profile("a", Some("Osaka"))], Granularity::ThreeHour);
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        assert_eq!(read_points(buf.as_slice()).unwrap(), pts);
    }
}
