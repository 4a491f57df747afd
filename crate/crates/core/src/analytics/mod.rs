//! Analyses over aggregated mood series: weekday up/down rhythm,
//! correlation with regional case counts, and event-gap traces.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::corpus::{CaseCountRecord, CaseScope, Prefecture, TimestampMs};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("input is constant; correlation undefined")]
    Constant,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const WEEKDAYS: [Weekday; 7] =
    [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekdayStats {
    pub weekday: String,
    /// Days compared against the previous day.
    pub counted: usize,
    /// Counted days scoring at least as high as the previous day.
    pub up: usize,
    pub share: f64,
    /// Days dropped because they or the previous day are holidays.
    pub holiday_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmReport {
    pub from: NaiveDate,
    pub to: NaiveDate,
    /// Monday first.
    pub weekdays: Vec<WeekdayStats>,
}

/// Day-over-day up counts per weekday on `[from, to]`. A day is compared
/// only when it and the previous day both have scores and neither is a holiday.
pub fn weekday_rhythm(
    daily: &BTreeMap<NaiveDate, f64>,
    holidays: &BTreeSet<NaiveDate>,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<RhythmReport, AnalyticsError> {
    if daily.len() < 2 {
        return Err(AnalyticsError::TooShort { need: 2, got: daily.len() });
    }
    if from > to {
        return Err(AnalyticsError::Invalid(format!("empty range {from} .. {to}")));
    }
    let mut counted = [0usize; 7];
    let mut up = [0usize; 7];
    let mut excluded = [0usize; 7];
    for (&day, &score) in daily.range(from..=to) {
        let Some(prev_day) = day.pred_opt() else { continue };
        let Some(&prev) = daily.get(&prev_day) else { continue };
        let w = day.weekday().num_days_from_monday() as usize;
        if holidays.contains(&day) || holidays.contains(&prev_day) {
            excluded[w] += 1;
            continue;
        }
        counted[w] += 1;
        if score >= prev {
            up[w] += 1;
        }
    }
    let weekdays = WEEKDAYS
        .iter()
        .enumerate()
        .map(|(i, w)| WeekdayStats {
            weekday: w.to_string(),
            counted: counted[i],
            up: up[i],
            share: if counted[i] == 0 { 0.0 } else { up[i] as f64 / counted[i] as f64 },
            holiday_excluded: excluded[i],
        })
        .collect();
    Ok(RhythmReport { from, to, weekdays })
}

impl RhythmReport {
    pub fn get(&self, weekday: Weekday) -> &WeekdayStats {
        &self.weekdays[weekday.num_days_from_monday() as usize]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalyticsError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["weekday", "counted", "up", "share", "holiday_excluded"])?;
        for s in &self.weekdays {
            wr.write_record([
                s.weekday.clone(),
                s.counted.to_string(),
                s.up.to_string(),
                format!("{:.6}", s.share),
                s.holiday_excluded.to_string(),
            ])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn long_rows(&self) -> Vec<(String, String, f64)> {
        self.weekdays
            .iter()
            .flat_map(|s| {
                [
                    (s.weekday.clone(), "up".to_string(), s.up as f64),
                    (s.weekday.clone(), "down".to_string(), (s.counted - s.up) as f64),
                    (s.weekday.clone(), "share".to_string(), s.share),
                ]
            })
            .collect()
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::Length(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooShort { need: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePair {
    pub prefecture: Prefecture,
    pub relative_score: f64,
    pub cases: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCorrelation {
    pub date: NaiveDate,
    pub r: f64,
    pub pairs: Vec<CasePair>,
}

/// Pair each prefecture's relative score with its case count on `date`
/// and correlate them. Prefectures missing either value are left out.
pub fn correlate_with_cases(
    relative: &BTreeMap<Prefecture, f64>,
    cases: &[CaseCountRecord],
    date: NaiveDate,
) -> Result<CaseCorrelation, AnalyticsError> {
    let on_date: BTreeMap<Prefecture, u64> = cases
        .iter()
        .filter(|c| c.date == date)
        .filter_map(|c| match c.scope {
            CaseScope::Prefecture(p) => Some((p, c.new_cases)),
            CaseScope::Nation => None,
        })
        .collect();
    let pairs: Vec<CasePair> = relative
        .iter()
        .filter_map(|(p, v)| on_date.get(p).map(|c| CasePair { prefecture: *p, relative_score: *v, cases: *c }))
        .collect();
    if pairs.len() < 3 {
        return Err(AnalyticsError::TooShort { need: 3, got: pairs.len() });
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.relative_score).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.cases as f64).collect();
    let r = pearson(&x, &y)?;
    Ok(CaseCorrelation { date, r, pairs })
}

impl CaseCorrelation {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalyticsError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["prefecture", "relative_score", "cases"])?;
        for p in &self.pairs {
            wr.write_record([p.prefecture.name().to_string(), p.relative_score.to_string(), p.cases.to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn long_rows(&self) -> Vec<(String, String, f64)> {
        self.pairs
            .iter()
            .flat_map(|p| {
                [
                    (p.prefecture.name().to_string(), "relative_score".to_string(), p.relative_score),
                    (p.prefecture.name().to_string(), "cases".to_string(), p.cases as f64),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    /// Offset of the bucket from the window start.
    pub offset_ms: i64,
    pub target: f64,
    pub reference_mean: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTrace {
    pub target_start: TimestampMs,
    pub reference_starts: Vec<TimestampMs>,
    pub bucket_ms: i64,
    pub points: Vec<GapPoint>,
    /// Offsets dropped because an input was absent or the reference mean was 0.
    pub omitted: Vec<i64>,
}

/// Per-bucket ratio of the target window to the mean of the reference
/// windows. `series` maps bucket start instants to values.
pub fn event_gap(
    series: &BTreeMap<TimestampMs, f64>,
    target_start: TimestampMs,
    reference_starts: &[TimestampMs],
    length_ms: i64,
    bucket_ms: i64,
) -> Result<GapTrace, AnalyticsError> {
    if reference_starts.is_empty() {
        return Err(AnalyticsError::Invalid("need at least one reference window".into()));
    }
    if bucket_ms <= 0 || length_ms <= 0 || length_ms % bucket_ms != 0 {
        return Err(AnalyticsError::Invalid(format!("window {length_ms} ms is not a multiple of bucket {bucket_ms} ms")));
    }
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for k in 0..length_ms / bucket_ms {
        let off = k * bucket_ms;
        let target = series.get(&(target_start + off)).copied();
        let refs: Option<Vec<f64>> = reference_starts.iter().map(|r| series.get(&(r + off)).copied()).collect();
        match (target, refs) {
            (Some(t), Some(refs)) => {
                let m = refs.iter().sum::<f64>() / refs.len() as f64;
                if m == 0.0 {
                    omitted.push(off);
                    continue;
                }
                points.push(GapPoint { offset_ms: off, target: t, reference_mean: m, ratio: t / m });
            }
            _ => omitted.push(off),
        }
    }
    if !omitted.is_empty() {
        log::warn!("event gap: {} of {} buckets omitted for missing data", omitted.len(), length_ms / bucket_ms);
    }
    Ok(GapTrace { target_start, reference_starts: reference_starts.to_vec(), bucket_ms, points, omitted })
}

impl GapTrace {
    /// Mean ratio over buckets with offsets in `[from, to)`.
    pub fn mean_ratio(&self, from: i64, to: i64) -> Option<f64> {
        let v: Vec<f64> = self.points.iter().filter(|p| p.offset_ms >= from && p.offset_ms < to).map(|p| p.ratio).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, w: W, offset_min: i32) -> Result<(), AnalyticsError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bucket", "offset_hours", "target", "reference_mean", "ratio"])?;
        for p in &self.points {
            wr.write_record([
                crate::corpus::format_instant(self.target_start + p.offset_ms, offset_min),
                format!("{}", p.offset_ms as f64 / 3_600_000.0),
                p.target.to_string(),
                p.reference_mean.to_string(),
                p.ratio.to_string(),
            ])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn long_rows(&self, offset_min: i32) -> Vec<(String, String, f64)> {
        self.points
            .iter()
            .flat_map(|p| {
                let b = crate::corpus::format_instant(self.target_start + p.offset_ms, offset_min);
                [
                    (b.clone(), "target".to_string(), p.target),
                    (b.clone(), "reference_mean".to_string(), p.reference_mean),
                    (b, "ratio".to_string(), p.ratio),
                ]
            })
            .collect()
    }
}

/// Plot-ready long format: `bucket,series,value`.
pub fn write_long<W: Write>(w: W, rows: &[(String, String, f64)]) -> Result<(), AnalyticsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["bucket", "series", "value"])?;
    for (b, s, v) in rows {
        wr.write_record([b.as_str(), s.as_str(), &v.to_string()])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn constant_series_is_all_up() {
        let daily: BTreeMap<NaiveDate, f64> = (0..14).map(|i| (d(2020, 1, 6) + chrono::Days::new(i), 1.0)).collect();
        let r = weekday_rhythm(&daily, &BTreeSet::new(), d(2020, 1, 6), d(2020, 1, 19)).unwrap();
        for s in &r.weekdays {
            assert_eq!(s.up, s.counted);
        }
        // The first Monday has no previous day in the series.
        assert_eq!(r.get(Weekday::Mon).counted, 1);
        assert_eq!(r.get(Weekday::Tue).counted, 2);
    }

    #[test]
    fn holiday_monday_excluded() {
        let daily: BTreeMap<NaiveDate, f64> = (0..14).map(|i| (d(2020, 1, 5) + chrono::Days::new(i), i as f64)).collect();
        let hol: BTreeSet<NaiveDate> = [d(2020, 1, 13)].into();
        let r = weekday_rhythm(&daily, &hol, d(2020, 1, 5), d(2020, 1, 18)).unwrap();
        assert_eq!(r.get(Weekday::Mon).counted, 1);
        assert_eq!(r.get(Weekday::Mon).holiday_excluded, 1);
        assert_eq!(r.get(Weekday::Tue).holiday_excluded, 1);
        assert!(weekday_rhythm(&BTreeMap::new(), &hol, d(2020, 1, 1), d(2020, 1, 2)).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[3.0; 10]), Err(AnalyticsError::Constant)));
    }

    #[test]
    fn equal_cases_rejected() {
        let prefs: Vec<Prefecture> = (0..4).map(|i| Prefecture::from_index(i).unwrap()).collect();
        let rel: BTreeMap<Prefecture, f64> = prefs.iter().enumerate().map(|(i, p)| (*p, i as f64)).collect();
        let cases: Vec<CaseCountRecord> = prefs
            .iter()
            .map(|p| CaseCountRecord { date: d(2020, 4, 10), scope: CaseScope::Prefecture(*p), new_cases: 5 })
            .collect();
        assert!(matches!(correlate_with_cases(&rel, &cases, d(2020, 4, 10)), Err(AnalyticsError::Constant)));
        assert!(matches!(correlate_with_cases(&rel, &cases, d(2020, 4, 11)), Err(AnalyticsError::TooShort { .. })));
    }

    #[test]
    fn gap_examples() {
        let h = 3_600_000;
        let mut s = BTreeMap::new();
        for k in 0..4 {
            s.insert(k * h, 2.0);
            s.insert(100 * h + k * h, 2.0);
        }
        s.insert(100 * h + 2 * h, 1.0);
        let g = event_gap(&s, 100 * h, &[0], 4 * h, h).unwrap();
        let ratios: Vec<f64> = g.points.iter().map(|p| p.ratio).collect();
        assert_eq!(ratios, vec![1.0, 1.0, 0.5, 1.0]);
        s.remove(&h);
        let g = event_gap(&s, 100 * h, &[0], 4 * h, h).unwrap();
        assert_eq!(g.omitted, vec![h]);
    }
}
