use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Value};

use super::prefecture::{parse_residence, residence_label};
use super::types::*;
use super::CorpusError;

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Largest tolerated share of malformed lines before parsing fails.
    pub max_bad_ratio: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { max_bad_ratio: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadLine {
    pub line: usize,
    pub reason: String,
}

/// Records that survived validation plus the bookkeeping for those that did not.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub total_lines: usize,
    pub bad_lines: Vec<BadLine>,
}

impl<T> Parsed<T> {
    fn check(self, path: &Path, opts: ParseOptions) -> Result<Self, CorpusError> {
        let bad = self.bad_lines.len();
        if self.total_lines > 0 && bad as f64 > opts.max_bad_ratio * self.total_lines as f64 {
            return Err(CorpusError::TooManyBadLines {
                path: path.to_path_buf(),
                bad,
                total: self.total_lines,
                limit: opts.max_bad_ratio * 100.0,
                lines: self.bad_lines.iter().take(20).map(|b| b.line).collect(),
            });
        }
        if bad > 0 {
            log::warn!("{}: skipped {bad} invalid line(s) of {}", path.display(), self.total_lines);
        }
        Ok(self)
    }
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

#[derive(Deserialize)]
struct RawSensorLine {
    user: String,
    ts: i64,
    sensor: String,
    v: Vec<Value>,
}

fn num(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("expected number, got {v}"))
}

fn text(v: &Value) -> Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected string, got {v}"))
}

fn flag(v: &Value) -> Result<bool, String> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) => match n.as_f64() {
            Some(x) if x == 0.0 => Ok(false),
            Some(x) if x == 1.0 => Ok(true),
            _ => Err(format!("charging flag must be 0 or 1, got {n}")),
        },
        other => Err(format!("expected charging flag, got {other}")),
    }
}

fn decode_reading(kind: SensorKind, v: &[Value]) -> Result<SensorReading, String> {
    let arity = match kind {
        SensorKind::Accelerometer | SensorKind::Gyroscope => 3,
        SensorKind::Barometer | SensorKind::Network | SensorKind::Screen => 1,
        SensorKind::Battery | SensorKind::Location => 2,
        SensorKind::Weather => 9,
    };
    if v.len() != arity {
        return Err(format!("{kind} payload needs {arity} values, got {}", v.len()));
    }
    let reading = match kind {
        SensorKind::Accelerometer => SensorReading::Accelerometer([num(&v[0])?, num(&v[1])?, num(&v[2])?]),
        SensorKind::Gyroscope => SensorReading::Gyroscope([num(&v[0])?, num(&v[1])?, num(&v[2])?]),
        SensorKind::Barometer => SensorReading::Barometer(num(&v[0])?),
        SensorKind::Battery => SensorReading::Battery { level: num(&v[0])?, charging: flag(&v[1])? },
        SensorKind::Location => SensorReading::Location { lat: num(&v[0])?, lon: num(&v[1])? },
        SensorKind::Network => SensorReading::Network(text(&v[0])?.parse()?),
        SensorKind::Screen => SensorReading::Screen(text(&v[0])?.parse()?),
        SensorKind::Weather => {
            let kind = text(&v[0])?.parse().unwrap_or(WeatherKind::Other);
            let mut channels = [0.0; 8];
            for (slot, value) in channels.iter_mut().zip(&v[1..]) {
                *slot = num(value)?;
            }
            SensorReading::Weather(Box::new(WeatherObs { kind, channels }))
        }
    };
    reading.validate()?;
    Ok(reading)
}

fn decode_sensor_line(line: &str) -> Result<SensorSample, String> {
    let raw: RawSensorLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.user.trim().is_empty() {
        return Err("empty user id".into());
    }
    let kind: SensorKind = raw.sensor.parse()?;
    let reading = decode_reading(kind, &raw.v)?;
    Ok(SensorSample { user: raw.user, ts: raw.ts, reading })
}

/// Parse JSONL sensor samples from any reader. Blank lines are ignored.
pub fn read_sensor_log<R: Read>(
    reader: R,
    source: &Path,
    opts: ParseOptions,
) -> Result<Parsed<SensorSample>, CorpusError> {
    let mut parsed = Parsed { records: Vec::new(), total_lines: 0, bad_lines: Vec::new() };
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source_err| CorpusError::Io { path: source.to_path_buf(), source: source_err })?;
        if line.trim().is_empty() {
            continue;
        }
        parsed.total_lines += 1;
        match decode_sensor_line(&line) {
            Ok(sample) => parsed.records.push(sample),
            Err(reason) => parsed.bad_lines.push(BadLine { line: i + 1, reason }),
        }
    }
    parsed.check(source, opts)
}

pub fn parse_sensor_log(path: &Path, opts: ParseOptions) -> Result<Parsed<SensorSample>, CorpusError> {
    read_sensor_log(open(path)?, path, opts)
}

/// Encode one sample as a JSONL line (without the trailing newline).
pub fn encode_sensor_line(sample: &SensorSample) -> String {
    let v: Vec<Value> = match &sample.reading {
        SensorReading::Accelerometer(a) | SensorReading::Gyroscope(a) => a.iter().map(|x| json!(x)).collect(),
        SensorReading::Barometer(p) => vec![json!(p)],
        SensorReading::Battery { level, charging } => vec![json!(level), json!(u8::from(*charging))],
        SensorReading::Location { lat, lon } => vec![json!(lat), json!(lon)],
        SensorReading::Network(n) => vec![json!(n.as_str())],
        SensorReading::Screen(s) => vec![json!(s.as_str())],
        SensorReading::Weather(w) => std::iter::once(json!(w.kind.as_str()))
            .chain(w.channels.iter().map(|x| json!(x)))
            .collect(),
    };
    json!({
        "user": sample.user,
        "ts": sample.ts,
        "sensor": sample.reading.kind().as_str(),
        "v": v,
    })
    .to_string()
}

pub fn write_sensor_log<'a, W: Write>(
    mut w: W,
    samples: impl IntoIterator<Item = &'a SensorSample>,
) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{}", encode_sensor_line(s))?;
    }
    w.flush()
}

/// Tolerant CSV reader: each data row is converted by `decode`; failures
/// are recorded as bad lines. The header row is required and skipped.
fn read_csv_tolerant<T>(
    path: &Path,
    opts: ParseOptions,
    expected_columns: usize,
    mut decode: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<Parsed<T>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(open(path)?);
    let mut parsed = Parsed { records: Vec::new(), total_lines: 0, bad_lines: Vec::new() };
    for result in reader.records() {
        parsed.total_lines += 1;
        let line = parsed.total_lines + 1;
        let outcome = match result {
            Ok(rec) if rec.len() != expected_columns => {
                Err(format!("expected {expected_columns} columns, got {}", rec.len()))
            }
            Ok(rec) => decode(&rec),
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(v) => parsed.records.push(v),
            Err(reason) => parsed.bad_lines.push(BadLine { line, reason }),
        }
    }
    parsed.check(path, opts)
}

fn user_field(rec: &csv::StringRecord) -> Result<String, String> {
    let user = rec[0].trim();
    if user.is_empty() {
        Err("empty user id".into())
    } else {
        Ok(user.to_string())
    }
}

fn ts_field(s: &str) -> Result<i64, String> {
    s.trim().parse::<i64>().map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

pub fn parse_query_log(path: &Path, opts: ParseOptions) -> Result<Parsed<QueryEvent>, CorpusError> {
    read_csv_tolerant(path, opts, 3, |rec| {
        let raw_query = rec[2].to_string();
        if raw_query.trim().is_empty() {
            return Err("empty query".into());
        }
        Ok(QueryEvent { user: user_field(rec)?, ts: ts_field(&rec[1])?, raw_query })
    })
}

pub fn parse_mood_reports(path: &Path, opts: ParseOptions) -> Result<Parsed<MoodReport>, CorpusError> {
    read_csv_tolerant(path, opts, 3, |rec| {
        let value: i64 = rec[2].trim().parse().map_err(|e| format!("bad likert {:?}: {e}", &rec[2]))?;
        let likert = Likert::new(value).map_err(|e| e.to_string())?;
        Ok(MoodReport { user: user_field(rec)?, ts: ts_field(&rec[1])?, likert })
    })
}

pub fn parse_profiles(path: &Path, opts: ParseOptions) -> Result<Parsed<UserProfile>, CorpusError> {
    read_csv_tolerant(path, opts, 3, |rec| {
        let prefecture = parse_residence(&rec[1]).map_err(|e| e.to_string())?;
        let tz = rec[2].trim();
        let tz_offset_min = if tz.is_empty() {
            DEFAULT_TZ_OFFSET_MIN
        } else {
            let v: i32 = tz.parse().map_err(|e| format!("bad tz offset {tz:?}: {e}"))?;
            if !(-720..=840).contains(&v) {
                return Err(format!("tz offset {v} outside [-720, 840]"));
            }
            v
        };
        Ok(UserProfile { user: user_field(rec)?, prefecture, tz_offset_min })
    })
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

/// Case counts are reference data: any malformed row is fatal.
pub fn read_case_counts<R: Read>(reader: R, source: &Path) -> Result<Vec<CaseCountRecord>, CorpusError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let fail = |msg: String| CorpusError::Validation(format!("{}:{line}: {msg}", source.display()));
        if rec.len() != 3 {
            return Err(fail(format!("expected 3 columns, got {}", rec.len())));
        }
        let date = parse_date(&rec[0]).map_err(fail)?;
        let scope: CaseScope = rec[1].parse().map_err(fail)?;
        let cases: i64 = rec[2].trim().parse().map_err(|e| fail(format!("bad case count {:?}: {e}", &rec[2])))?;
        if cases < 0 {
            return Err(fail(format!("negative case count {cases}")));
        }
        if !seen.insert((date, scope)) {
            return Err(fail(format!("duplicate record for {date} {scope}")));
        }
        out.push(CaseCountRecord { date, scope, new_cases: cases as u64 });
    }
    out.sort_by_key(|r| (r.date, r.scope));
    Ok(out)
}

pub fn parse_case_counts(path: &Path) -> Result<Vec<CaseCountRecord>, CorpusError> {
    read_case_counts(open(path)?, path)
}

pub fn parse_holidays(path: &Path) -> Result<Vec<Holiday>, CorpusError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let date = parse_date(rec.get(0).unwrap_or(""))
            .map_err(|m| CorpusError::Validation(format!("{}:{}: {m}", path.display(), i + 2)))?;
        out.push(Holiday { date, label: rec.get(1).unwrap_or("").to_string() });
    }
    out.sort_by_key(|h| h.date);
    Ok(out)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

/// Streaming query-log writer; the header is written on creation.
pub struct QueryLogWriter<W: Write>(csv::Writer<W>);

impl<W: Write> QueryLogWriter<W> {
    pub fn new(w: W) -> Result<Self, CorpusError> {
        let mut wr = csv_writer(w);
        wr.write_record(["user", "ts_ms", "query"])?;
        Ok(QueryLogWriter(wr))
    }

    pub fn write(&mut self, e: &QueryEvent) -> Result<(), CorpusError> {
        self.0.write_record([e.user.as_str(), &e.ts.to_string(), e.raw_query.as_str()])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CorpusError> {
        self.0.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Streaming self-report writer; the header is written on creation.
pub struct MoodReportWriter<W: Write>(csv::Writer<W>);

impl<W: Write> MoodReportWriter<W> {
    pub fn new(w: W) -> Result<Self, CorpusError> {
        let mut wr = csv_writer(w);
        wr.write_record(["user", "ts_ms", "likert"])?;
        Ok(MoodReportWriter(wr))
    }

    pub fn write(&mut self, r: &MoodReport) -> Result<(), CorpusError> {
        self.0.write_record([r.user.as_str(), &r.ts.to_string(), &r.likert.value().to_string()])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CorpusError> {
        self.0.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn write_query_log<'a, W: Write>(w: W, events: impl IntoIterator<Item = &'a QueryEvent>) -> Result<(), CorpusError> {
    let mut wr = QueryLogWriter::new(w)?;
    for e in events {
        wr.write(e)?;
    }
    wr.finish()
}

pub fn write_mood_reports<'a, W: Write>(w: W, reports: impl IntoIterator<Item = &'a MoodReport>) -> Result<(), CorpusError> {
    let mut wr = MoodReportWriter::new(w)?;
    for r in reports {
        wr.write(r)?;
    }
    wr.finish()
}

pub fn write_profiles<'a, W: Write>(w: W, profiles: impl IntoIterator<Item = &'a UserProfile>) -> Result<(), CorpusError> {
    let mut wr = csv_writer(w);
    wr.write_record(["user", "prefecture", "tz_offset_min"])?;
    for p in profiles {
        wr.write_record([p.user.as_str(), residence_label(p.prefecture), &p.tz_offset_min.to_string()])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_case_counts<'a, W: Write>(w: W, records: impl IntoIterator<Item = &'a CaseCountRecord>) -> Result<(), CorpusError> {
    let mut wr = csv_writer(w);
    wr.write_record(["date", "scope", "new_cases"])?;
    for r in records {
        wr.write_record([r.date.to_string(), r.scope.to_string(), r.new_cases.to_string()])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_holidays<'a, W: Write>(w: W, holidays: impl IntoIterator<Item = &'a Holiday>) -> Result<(), CorpusError> {
    let mut wr = csv_writer(w);
    wr.write_record(["date", "label"])?;
    for h in holidays {
        wr.write_record([h.date.to_string(), h.label.clone()])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}
