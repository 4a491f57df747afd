use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{OracleSession, SimConfig, SimError, Simulator};
use crate::corpus::{
    encode_sensor_line, format_instant, parse_residence, residence_label, write_case_counts,
    write_holidays, write_profiles, MoodClass, MoodReportWriter, QueryLogWriter, SessionKey, UserProfile,
};
use crate::moodagg::{Aggregator, Bucket, Granularity, MoodScorePoint, ScoredSession, DISPLAY_OFFSET_MIN};

/// File names written by [`write_corpus`].
pub const FILES: SimFiles = SimFiles {
    sensors: "sensors.jsonl",
    queries: "queries.csv",
    reports: "mood_reports.csv",
    profiles: "profiles.csv",
    cases: "case_counts.csv",
    holidays: "holidays.csv",
    oracle_sessions: "oracle_sessions.csv",
    oracle_buckets: "oracle_buckets.csv",
    shocks: "shock_ledger.csv",
    config: "sim_config.json",
};

#[derive(Debug, Clone, Copy)]
pub struct SimFiles {
    pub sensors: &'static str,
    pub queries: &'static str,
    pub reports: &'static str,
    pub profiles: &'static str,
    pub cases: &'static str,
    pub holidays: &'static str,
    pub oracle_sessions: &'static str,
    pub oracle_buckets: &'static str,
    pub shocks: &'static str,
    pub config: &'static str,
}

impl SimFiles {
    pub fn all(&self) -> [&'static str; 10] {
        [
            self.sensors,
            self.queries,
            self.reports,
            self.profiles,
            self.cases,
            self.holidays,
            self.oracle_sessions,
            self.oracle_buckets,
            self.shocks,
            self.config,
        ]
    }
}

/// Counts of what [`write_corpus`] emitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WriteCounts {
    pub users: usize,
    pub sessions: usize,
    pub samples: usize,
    pub queries: usize,
    pub reports: usize,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, SimError> {
    Ok(BufWriter::with_capacity(1 << 20, File::create(dir.join(name))?))
}

const USER_BATCH: usize = 256;

/// Simulate and stream every file into `dir`. Users are generated in
/// parallel batches and written in index order by this thread alone.
pub fn write_corpus(cfg: &SimConfig, dir: &Path) -> Result<WriteCounts, SimError> {
    let sim = Simulator::new(cfg)?;
    std::fs::create_dir_all(dir)?;
    let mut sensors = create(dir, FILES.sensors)?;
    let mut queries = QueryLogWriter::new(create(dir, FILES.queries)?)?;
    let mut reports = MoodReportWriter::new(create(dir, FILES.reports)?)?;
    let mut oracle = csv::Writer::from_writer(create(dir, FILES.oracle_sessions)?);
    oracle.write_record(ORACLE_HEADER)?;

    let daily = Granularity::Daily;
    let slot_granularity = match cfg.slot_minutes {
        180 => Some(Granularity::ThreeHour),
        60 => Some(Granularity::Hourly),
        _ => None,
    };
    let mut agg_daily = Aggregator::new(daily);
    let mut agg_slot = slot_granularity.map(Aggregator::new);

    let mut profiles: Vec<UserProfile> = Vec::with_capacity(cfg.n_users);
    let mut counts = WriteCounts::default();
    let mut lo = 0;
    while lo < cfg.n_users {
        let hi = (lo + USER_BATCH).min(cfg.n_users);
        for u in sim.users(lo..hi) {
            for s in &u.samples {
                writeln!(sensors, "{}", encode_sensor_line(s))?;
            }
            for q in &u.queries {
                queries.write(q)?;
            }
            for r in &u.reports {
                reports.write(r)?;
            }
            for o in &u.oracle {
                write_oracle_row(&mut oracle, o)?;
                let scored = ScoredSession {
                    key: SessionKey { user: o.user.clone(), window_start: o.window_start },
                    tz_offset_min: o.tz_offset_min,
                    score: o.latent,
                };
                agg_daily.add(&scored, o.prefecture);
                if let Some(a) = agg_slot.as_mut() {
                    a.add(&scored, o.prefecture);
                }
            }
            counts.sessions += u.oracle.len();
            counts.samples += u.samples.len();
            counts.queries += u.queries.len();
            counts.reports += u.reports.len();
            profiles.extend(u.profile);
        }
        lo = hi;
    }
    counts.users = profiles.len();
    sensors.flush()?;
    queries.finish()?;
    reports.finish()?;
    oracle.flush()?;

    write_profiles(create(dir, FILES.profiles)?, &profiles)?;
    write_case_counts(create(dir, FILES.cases)?, sim.case_counts())?;
    write_holidays(create(dir, FILES.holidays)?, &sim.holidays())?;

    let mut buckets = csv::Writer::from_writer(create(dir, FILES.oracle_buckets)?);
    buckets.write_record(["granularity", "scope", "bucket", "mean_latent", "user_count"])?;
    let mut sets = vec![(daily, agg_daily.finish())];
    if let (Some(g), Some(a)) = (slot_granularity, agg_slot) {
        sets.push((g, a.finish()));
    }
    for (g, points) in &sets {
        for p in points {
            buckets.write_record([
                g.to_string(),
                p.scope.to_string(),
                p.bucket.format(DISPLAY_OFFSET_MIN),
                p.mean_score.to_string(),
                p.user_count.to_string(),
            ])?;
        }
    }
    buckets.flush()?;

    let mut shocks = csv::Writer::from_writer(create(dir, FILES.shocks)?);
    shocks.write_record(["start", "end", "magnitude", "scope"])?;
    for s in sim.shocks.iter() {
        shocks.write_record([
            format_instant(s.start, cfg.tz_offset_min),
            format_instant(s.end, cfg.tz_offset_min),
            s.magnitude.to_string(),
            s.scope.map_or("nation".to_string(), |p| p.name().to_string()),
        ])?;
    }
    shocks.flush()?;

    let mut meta = create(dir, FILES.config)?;
    serde_json::to_writer_pretty(&mut meta, cfg)?;
    writeln!(meta)?;
    meta.flush()?;
    Ok(counts)
}

const ORACLE_HEADER: [&str; 9] =
    ["user", "window_start_ms", "tz_offset_min", "prefecture", "latent", "class", "has_sensors", "has_queries", "reported"];

fn write_oracle_row<W: Write>(w: &mut csv::Writer<W>, o: &OracleSession) -> Result<(), SimError> {
    w.write_record([
        o.user.clone(),
        o.window_start.to_string(),
        o.tz_offset_min.to_string(),
        residence_label(o.prefecture).to_string(),
        o.latent.to_string(),
        o.class.value().to_string(),
        u8::from(o.has_sensors).to_string(),
        u8::from(o.has_queries).to_string(),
        u8::from(o.reported).to_string(),
    ])?;
    Ok(())
}

fn open(path: &Path) -> Result<File, SimError> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SimError::MissingOracle(path.to_path_buf()),
        _ => SimError::Io(e),
    })
}

fn bad(path: &Path, line: usize, what: &str) -> SimError {
    SimError::Config(format!("{}:{line}: {what}", path.display()))
}

pub fn read_oracle_sessions(path: &Path) -> Result<Vec<OracleSession>, SimError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).ok_or_else(|| bad(path, line, "missing column"));
        let flag = |k: usize| -> Result<bool, SimError> {
            match field(k)? {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(path, line, "flag must be 0 or 1")),
            }
        };
        let class: i8 = field(5)?.parse().map_err(|_| bad(path, line, "class"))?;
        out.push(OracleSession {
            user: field(0)?.to_string(),
            window_start: field(1)?.parse().map_err(|_| bad(path, line, "window_start_ms"))?,
            tz_offset_min: field(2)?.parse().map_err(|_| bad(path, line, "tz_offset_min"))?,
            prefecture: parse_residence(field(3)?).map_err(|e| bad(path, line, &e.to_string()))?,
            latent: field(4)?.parse().map_err(|_| bad(path, line, "latent"))?,
            class: MoodClass::from_value(class).ok_or_else(|| bad(path, line, "class"))?,
            has_sensors: flag(6)?,
            has_queries: flag(7)?,
            reported: flag(8)?,
        });
    }
    Ok(out)
}

/// Summary of a simulated corpus, computed from its oracle files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub users: usize,
    pub days: usize,
    pub sessions: usize,
    pub reports: usize,
    pub reports_per_user_day: f64,
    /// Share of sessions per class, negative, neutral, positive.
    pub class_priors: [f64; 3],
    /// Mean nation daily latent by weekday, Monday first; NaN when absent.
    pub weekday_means: [f64; 7],
    pub monday_minus_sunday: f64,
    pub nation_daily: Vec<MoodScorePoint>,
    pub shocks: Vec<(String, String, f64, String)>,
}

/// Summarize a directory written by [`write_corpus`].
pub fn describe(dir: &Path) -> Result<SimSummary, SimError> {
    let cfg_path = dir.join(FILES.config);
    let cfg: SimConfig = serde_json::from_reader(open(&cfg_path)?)?;
    let oracle = read_oracle_sessions(&dir.join(FILES.oracle_sessions))?;

    let report_path = dir.join(FILES.reports);
    let reports = csv::Reader::from_reader(open(&report_path)?).records().count();
    let days = cfg.date_list().len();
    let users = cfg.n_users;

    let mut class_counts = [0usize; 3];
    for o in &oracle {
        class_counts[o.class.index()] += 1;
    }
    let n = oracle.len().max(1) as f64;
    let class_priors = class_counts.map(|c| c as f64 / n);

    let buckets_path = dir.join(FILES.oracle_buckets);
    let mut nation_daily = Vec::new();
    let mut r = csv::Reader::from_reader(open(&buckets_path)?);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != Some("daily") || rec.get(1) != Some("nation") {
            continue;
        }
        let line = i + 2;
        let (bucket, _) = Bucket::parse(rec.get(2).unwrap_or("")).map_err(|e| bad(&buckets_path, line, &e))?;
        nation_daily.push(MoodScorePoint {
            scope: crate::moodagg::Scope::Nation,
            bucket,
            mean_score: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad(&buckets_path, line, "mean_latent"))?,
            user_count: rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(|| bad(&buckets_path, line, "user_count"))?,
        });
    }
    let mut sums = [0.0f64; 7];
    let mut cnt = [0usize; 7];
    for p in &nation_daily {
        let wd = p.bucket.date(DISPLAY_OFFSET_MIN).weekday().num_days_from_monday() as usize;
        sums[wd] += p.mean_score;
        cnt[wd] += 1;
    }
    let weekday_means: [f64; 7] = std::array::from_fn(|k| if cnt[k] == 0 { f64::NAN } else { sums[k] / cnt[k] as f64 });

    let shocks_path = dir.join(FILES.shocks);
    let mut shocks = Vec::new();
    for rec in csv::Reader::from_reader(open(&shocks_path)?).records() {
        let rec = rec?;
        shocks.push((
            rec.get(0).unwrap_or("").to_string(),
            rec.get(1).unwrap_or("").to_string(),
            rec.get(2).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN),
            rec.get(3).unwrap_or("").to_string(),
        ));
    }

    Ok(SimSummary {
        users,
        days,
        sessions: oracle.len(),
        reports,
        reports_per_user_day: reports as f64 / (users * days).max(1) as f64,
        class_priors,
        weekday_means,
        monday_minus_sunday: weekday_means[0] - weekday_means[6],
        nation_daily,
        shocks,
    })
}

impl SimSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s += &format!("users {}  days {}  sessions {}  reports {}\n", self.users, self.days, self.sessions, self.reports);
        s += &format!("reports per user-day {:.4}\n", self.reports_per_user_day);
        s += &format!(
            "class priors  negative {:.4}  neutral {:.4}  positive {:.4}\n",
            self.class_priors[0], self.class_priors[1], self.class_priors[2]
        );
        s += "weekday mean latent (nation, daily)\n";
        for (name, m) in crate::analytics::WEEKDAYS.iter().zip(self.weekday_means) {
            s += &format!("  {name:<9} {m:.4}\n");
        }
        s += &format!("monday - sunday {:.4}\n", self.monday_minus_sunday);
        if !self.shocks.is_empty() {
            s += "shocks\n";
            for (a, b, m, scope) in &self.shocks {
                s += &format!("  {a} .. {b}  {m:+.3}  {scope}\n");
            }
        }
        s
    }

    /// `metric,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["metric", "value"])?;
        let mut row = |k: String, v: f64| wr.write_record([k, v.to_string()]);
        row("users".into(), self.users as f64)?;
        row("days".into(), self.days as f64)?;
        row("sessions".into(), self.sessions as f64)?;
        row("reports".into(), self.reports as f64)?;
        row("reports_per_user_day".into(), self.reports_per_user_day)?;
        for (c, p) in MoodClass::ALL.iter().zip(self.class_priors) {
            row(format!("prior_{c}"), p)?;
        }
        for (name, m) in crate::analytics::WEEKDAYS.iter().zip(self.weekday_means) {
            row(format!("mean_{}", name.to_string().to_lowercase()), m)?;
        }
        row("monday_minus_sunday".into(), self.monday_minus_sunday)?;
        wr.flush()?;
        Ok(())
    }
}

/// Nation daily oracle means keyed by local date.
pub fn nation_daily_means(summary: &SimSummary) -> std::collections::BTreeMap<chrono::NaiveDate, f64> {
    summary.nation_daily.iter().map(|p| (p.bucket.date(DISPLAY_OFFSET_MIN), p.mean_score)).collect()
}
