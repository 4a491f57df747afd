use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, FixedOffset, NaiveDate, SecondsFormat};
use rayon::prelude::*;

use super::types::*;

pub const DEFAULT_WINDOW_MS: i64 = 3 * HOUR_MS;

/// Identifies a session: user plus the UTC instant of its local-aligned start.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct SessionKey {
    pub user: String,
    pub window_start: TimestampMs,
}

/// Per-channel readings of one session, each sorted by timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorBundle {
    pub accelerometer: Vec<(TimestampMs, [f64; 3])>,
    pub gyroscope: Vec<(TimestampMs, [f64; 3])>,
    pub barometer: Vec<(TimestampMs, f64)>,
    pub battery: Vec<(TimestampMs, f64, bool)>,
    pub location: Vec<(TimestampMs, f64, f64)>,
    pub network: Vec<(TimestampMs, NetworkType)>,
    pub weather: Vec<(TimestampMs, WeatherObs)>,
    pub screen: Vec<(TimestampMs, ScreenEvent)>,
}

impl SensorBundle {
    fn push(&mut self, ts: TimestampMs, reading: SensorReading) {
        match reading {
            SensorReading::Accelerometer(v) => self.accelerometer.push((ts, v)),
            SensorReading::Gyroscope(v) => self.gyroscope.push((ts, v)),
            SensorReading::Barometer(p) => self.barometer.push((ts, p)),
            SensorReading::Battery { level, charging } => self.battery.push((ts, level, charging)),
            SensorReading::Location { lat, lon } => self.location.push((ts, lat, lon)),
            SensorReading::Network(n) => self.network.push((ts, n)),
            SensorReading::Weather(w) => self.weather.push((ts, *w)),
            SensorReading::Screen(s) => self.screen.push((ts, s)),
        }
    }

    fn sort(&mut self) {
        self.accelerometer.sort_by_key(|e| e.0);
        self.gyroscope.sort_by_key(|e| e.0);
        self.barometer.sort_by_key(|e| e.0);
        self.battery.sort_by_key(|e| e.0);
        self.location.sort_by_key(|e| e.0);
        self.network.sort_by_key(|e| e.0);
        self.weather.sort_by_key(|e| e.0);
        self.screen.sort_by_key(|e| e.0);
    }

    pub fn len(&self) -> usize {
        self.accelerometer.len()
            + self.gyroscope.len()
            + self.barometer.len()
            + self.battery.len()
            + self.location.len()
            + self.network.len()
            + self.weather.len()
            + self.screen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rebuild the flat sample list (used to check the partition property).
    pub fn to_samples(&self, user: &str) -> Vec<SensorSample> {
        let mut out = Vec::with_capacity(self.len());
        let mut push = |ts, reading| out.push(SensorSample { user: user.to_string(), ts, reading });
        self.accelerometer.iter().for_each(|(t, v)| push(*t, SensorReading::Accelerometer(*v)));
        self.gyroscope.iter().for_each(|(t, v)| push(*t, SensorReading::Gyroscope(*v)));
        self.barometer.iter().for_each(|(t, p)| push(*t, SensorReading::Barometer(*p)));
        self.battery.iter().for_each(|(t, level, charging)| {
            push(*t, SensorReading::Battery { level: *level, charging: *charging })
        });
        self.location.iter().for_each(|(t, lat, lon)| push(*t, SensorReading::Location { lat: *lat, lon: *lon }));
        self.network.iter().for_each(|(t, n)| push(*t, SensorReading::Network(*n)));
        self.weather.iter().for_each(|(t, w)| push(*t, SensorReading::Weather(Box::new(*w))));
        self.screen.iter().for_each(|(t, s)| push(*t, SensorReading::Screen(*s)));
        out
    }
}

/// A fixed-length, local-midnight-aligned window of one user's activity.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user: String,
    pub window_start: TimestampMs,
    pub window_ms: i64,
    pub tz_offset_min: i32,
    pub sensors: SensorBundle,
    pub queries: Vec<QueryEvent>,
    /// Every report inside the window, in time order. See [`Session::self_report`].
    pub reports: Vec<MoodReport>,
}

impl Session {
    pub fn key(&self) -> SessionKey {
        SessionKey { user: self.user.clone(), window_start: self.window_start }
    }

    pub fn window_end(&self) -> TimestampMs {
        self.window_start + self.window_ms
    }

    /// The session's label: the latest report in the window.
    pub fn self_report(&self) -> Option<&MoodReport> {
        self.reports.last()
    }

    pub fn local_date(&self) -> NaiveDate {
        local_date(self.window_start, self.tz_offset_min)
    }
}

/// Start (UTC ms) of the window containing `ts`, aligned to the user's local midnight.
pub fn window_start_for(ts: TimestampMs, tz_offset_min: i32, window_ms: i64) -> TimestampMs {
    let offset = i64::from(tz_offset_min) * MINUTE_MS;
    (ts + offset).div_euclid(window_ms) * window_ms - offset
}

pub fn local_date(ts: TimestampMs, tz_offset_min: i32) -> NaiveDate {
    let local = ts + i64::from(tz_offset_min) * MINUTE_MS;
    DateTime::from_timestamp_millis(local.div_euclid(DAY_MS) * DAY_MS)
        .expect("timestamp within chrono range")
        .date_naive()
}

/// ISO-8601 rendering of an instant in a fixed offset, e.g. `2019-10-01T06:00:00+09:00`.
pub fn format_instant(ts: TimestampMs, tz_offset_min: i32) -> String {
    let offset = FixedOffset::east_opt(tz_offset_min * 60).expect("offset within a day");
    DateTime::from_timestamp_millis(ts)
        .expect("timestamp within chrono range")
        .with_timezone(&offset)
        .to_rfc3339_opts(SecondsFormat::AutoSi, false)
}

/// Inverse of [`format_instant`]: (UTC ms, offset minutes).
pub fn parse_instant(s: &str) -> Result<(TimestampMs, i32), String> {
    let dt = DateTime::parse_from_rfc3339(s.trim()).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
    Ok((dt.timestamp_millis(), dt.offset().local_minus_utc() / 60))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionizeReport {
    /// Users with events but no profile; they fall back to the default timezone.
    pub unknown_users: Vec<String>,
    pub sessions: usize,
}

#[derive(Default)]
struct UserEvents {
    samples: Vec<SensorSample>,
    queries: Vec<QueryEvent>,
    reports: Vec<MoodReport>,
}

fn build_user_sessions(user: String, tz: i32, events: UserEvents, window_ms: i64) -> Vec<Session> {
    let mut windows: BTreeMap<TimestampMs, Session> = BTreeMap::new();
    fn slot<'a>(
        windows: &'a mut BTreeMap<TimestampMs, Session>,
        user: &str,
        tz: i32,
        window_ms: i64,
        ts: TimestampMs,
    ) -> &'a mut Session {
        let start = window_start_for(ts, tz, window_ms);
        windows.entry(start).or_insert_with(|| Session {
            user: user.to_string(),
            window_start: start,
            window_ms,
            tz_offset_min: tz,
            sensors: SensorBundle::default(),
            queries: Vec::new(),
            reports: Vec::new(),
        })
    }
    for s in events.samples {
        slot(&mut windows, &user, tz, window_ms, s.ts).sensors.push(s.ts, s.reading);
    }
    for q in events.queries {
        slot(&mut windows, &user, tz, window_ms, q.ts).queries.push(q);
    }
    for r in events.reports {
        slot(&mut windows, &user, tz, window_ms, r.ts).reports.push(r);
    }
    windows
        .into_values()
        .map(|mut s| {
            s.sensors.sort();
            s.queries.sort_by_key(|q| q.ts);
            s.reports.sort_by_key(|r| r.ts);
            s
        })
        .collect()
}

/// Partition all events into per-user windows of `window_ms`.
///
/// Windows are aligned to local midnight (so 3-hour windows start at
/// 00:00, 03:00, ... 21:00 local time) and are half-open. Windows without
/// events are not produced. Output is sorted by (user, window_start).
pub fn sessionize(
    samples: Vec<SensorSample>,
    reports: Vec<MoodReport>,
    queries: Vec<QueryEvent>,
    profiles: &[UserProfile],
    window_ms: i64,
) -> (Vec<Session>, SessionizeReport) {
    assert!(window_ms > 0 && DAY_MS % window_ms == 0, "window must evenly divide a day");
    let tz_of: HashMap<&str, i32> = profiles.iter().map(|p| (p.user.as_str(), p.tz_offset_min)).collect();

    let mut by_user: HashMap<String, UserEvents> = HashMap::new();
    for s in samples {
        by_user.entry(s.user.clone()).or_default().samples.push(s);
    }
    for q in queries {
        by_user.entry(q.user.clone()).or_default().queries.push(q);
    }
    for r in reports {
        by_user.entry(r.user.clone()).or_default().reports.push(r);
    }

    let mut users: Vec<(String, UserEvents)> = by_user.into_iter().collect();
    users.sort_by(|a, b| a.0.cmp(&b.0));

    let unknown: BTreeSet<String> =
        users.iter().filter(|(u, _)| !tz_of.contains_key(u.as_str())).map(|(u, _)| u.clone()).collect();
    if !unknown.is_empty() {
        log::warn!("{} user(s) have events but no profile; using default timezone", unknown.len());
    }

    let sessions: Vec<Session> = users
        .into_par_iter()
        .map(|(user, events)| {
            let tz = tz_of.get(user.as_str()).copied().unwrap_or(DEFAULT_TZ_OFFSET_MIN);
            build_user_sessions(user, tz, events, window_ms)
        })
        .flatten_iter()
        .collect();

    let report = SessionizeReport { unknown_users: unknown.into_iter().collect(), sessions: sessions.len() };
    (sessions, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn jst_ms(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> i64 {
        FixedOffset::east_opt(9 * 3600)
            .unwrap()
            .with_ymd_and_hms(y, mo, d, h, mi, s)
            .unwrap()
            .timestamp_millis()
    }

    fn query(user: &str, ts: i64) -> QueryEvent {
        QueryEvent { user: user.into(), ts, raw_query: "q".into() }
    }

    fn profile(user: &str) -> UserProfile {
        UserProfile { user: user.into(), prefecture: None, tz_offset_min: 540 }
    }

    #[test]
    fn boundaries_are_half_open() {
        let q1 = query("u1", jst_ms(2019, 10, 1, 8, 29, 0));
        let q2 = query("u1", jst_ms(2019, 10, 1, 9, 0, 0));
        let (s, _) = sessionize(vec![], vec![], vec![q1, q2], &[profile("u1")], DEFAULT_WINDOW_MS);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].window_start, jst_ms(2019, 10, 1, 6, 0, 0));
        assert_eq!(s[1].window_start, jst_ms(2019, 10, 1, 9, 0, 0));
    }

    #[test]
    fn no_events_no_sessions() {
        let (s, r) = sessionize(vec![], vec![], vec![], &[profile("u1")], DEFAULT_WINDOW_MS);
        assert!(s.is_empty());
        assert_eq!(r.sessions, 0);
    }

    #[test]
    fn unknown_users_get_default_timezone() {
        let q = query("ghost", jst_ms(2019, 10, 1, 23, 59, 0));
        let (s, r) = sessionize(vec![], vec![], vec![q], &[], DEFAULT_WINDOW_MS);
        assert_eq!(r.unknown_users, vec!["ghost".to_string()]);
        assert_eq!(s[0].window_start, jst_ms(2019, 10, 1, 21, 0, 0));
        assert_eq!(s[0].tz_offset_min, DEFAULT_TZ_OFFSET_MIN);
    }

    #[test]
    fn latest_report_wins() {
        let mk = |ts, v| MoodReport { user: "u1".into(), ts, likert: Likert::new(v).unwrap() };
        let reports = vec![mk(jst_ms(2019, 10, 1, 13, 0, 0), 2), mk(jst_ms(2019, 10, 1, 12, 10, 0), 6)];
        let (s, _) = sessionize(vec![], reports, vec![], &[profile("u1")], DEFAULT_WINDOW_MS);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].reports.len(), 2);
        assert_eq!(s[0].self_report().unwrap().likert.value(), 2);
    }

    #[test]
    fn instants_round_trip() {
        let ts = jst_ms(2019, 10, 1, 6, 0, 0);
        let s = format_instant(ts, 540);
        assert_eq!(s, "2019-10-01T06:00:00+09:00");
        assert_eq!(parse_instant(&s).unwrap(), (ts, 540));
    }

    #[test]
    fn local_date_uses_offset() {
        let ts = jst_ms(2020, 4, 12, 0, 30, 0);
        assert_eq!(local_date(ts, 540), NaiveDate::from_ymd_opt(2020, 4, 12).unwrap());
        assert_eq!(local_date(ts, 0), NaiveDate::from_ymd_opt(2020, 4, 11).unwrap());
    }
}
