//! Per-sensor feature blocks.
//!
//! Event-driven channels (battery charging, network, screen) are treated as
//! step functions: a reading sets the state until the next reading or the
//! window end. Before the first reading the state is "off" (not charging,
//! no connection, screen off).

use std::collections::BTreeMap;

use crate::corpus::{NetworkType, ScreenEvent, TimestampMs, WeatherKind, WeatherObs, MINUTE_MS};

use super::stats;

/// Half-open time window `[start, end)` in UTC milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: TimestampMs,
    pub end: TimestampMs,
}

impl Window {
    pub fn minutes(&self) -> f64 {
        (self.end - self.start) as f64 / MINUTE_MS as f64
    }

    fn clamp(&self, t: TimestampMs) -> TimestampMs {
        t.clamp(self.start, self.end)
    }
}

fn to_minutes(ms: i64) -> f64 {
    ms as f64 / MINUTE_MS as f64
}

/// Accelerometer / gyroscope block (23 values).
///
/// Layout: magnitude (mean, std, median, min, max), per-axis mean,
/// variance, skewness, excess kurtosis, then correlation and covariance
/// for the axis pairs xy, yz, zx.
pub fn extract_imu(samples: &[(TimestampMs, [f64; 3])]) -> [f64; 23] {
    let mut out = [f64::NAN; 23];
    if samples.is_empty() {
        return out;
    }
    let axis = |k: usize| samples.iter().map(|(_, v)| v[k]).collect::<Vec<f64>>();
    let axes = [axis(0), axis(1), axis(2)];
    let magnitude: Vec<f64> = samples.iter().map(|(_, v)| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).collect();

    out[..5].copy_from_slice(&stats::five(&magnitude));
    for k in 0..3 {
        out[5 + k] = stats::mean(&axes[k]);
        out[8 + k] = stats::variance(&axes[k]);
        out[11 + k] = stats::skewness(&axes[k]);
        out[14 + k] = stats::excess_kurtosis(&axes[k]);
    }
    for (j, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        out[17 + j] = stats::correlation(&axes[a], &axes[b]);
        out[20 + j] = stats::covariance(&axes[a], &axes[b]);
    }
    out
}

pub fn extract_barometer(samples: &[(TimestampMs, f64)]) -> [f64; 5] {
    let p: Vec<f64> = samples.iter().map(|s| s.1).collect();
    stats::five(&p)
}

/// Battery block: level statistics, charging episodes (off→on
/// transitions) and total charging minutes inside the window.
pub fn extract_battery(samples: &[(TimestampMs, f64, bool)], window: Window) -> [f64; 7] {
    let mut out = [f64::NAN; 7];
    if samples.is_empty() {
        return out;
    }
    let levels: Vec<f64> = samples.iter().map(|s| s.1).collect();
    out[..5].copy_from_slice(&stats::five(&levels));

    let mut episodes = 0usize;
    let mut charging_ms = 0i64;
    let mut prev = false;
    for (i, &(ts, _, charging)) in samples.iter().enumerate() {
        if charging && !prev {
            episodes += 1;
        }
        if charging {
            let until = samples.get(i + 1).map_or(window.end, |s| s.0);
            charging_ms += window.clamp(until) - window.clamp(ts);
        }
        prev = charging;
    }
    out[5] = episodes as f64;
    out[6] = to_minutes(charging_ms);
    out
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Stay cluster of a fix: coordinates snapped to a 0.001° grid.
pub fn grid_cell(lat: f64, lon: f64) -> (i64, i64) {
    ((lat * 1000.0).round() as i64, (lon * 1000.0).round() as i64)
}

const MOVING_SPEED_MPS: f64 = 1.0;

/// Location block (12 values); see the registry for the order.
///
/// Each fix is weighted by its dwell time (until the next fix, the last
/// one until the window end). Entropy uses natural logarithms.
pub fn extract_location(fixes: &[(TimestampMs, f64, f64)], window: Window) -> [f64; 12] {
    let mut out = [f64::NAN; 12];
    if fixes.is_empty() {
        return out;
    }
    let n = fixes.len();
    let cells: Vec<(i64, i64)> = fixes.iter().map(|f| grid_cell(f.1, f.2)).collect();
    let dwell: Vec<i64> = (0..n)
        .map(|i| {
            let until = fixes.get(i + 1).map_or(window.end, |f| f.0);
            (window.clamp(until) - window.clamp(fixes[i].0)).max(0)
        })
        .collect();
    let total: i64 = dwell.iter().sum();
    // Without any dwell time every fix counts equally.
    let mut per_cell: BTreeMap<(i64, i64), i64> = BTreeMap::new();
    for (c, d) in cells.iter().zip(&dwell) {
        *per_cell.entry(*c).or_insert(0) += if total > 0 { *d } else { 1 };
    }
    let denom = if total > 0 { total } else { n as i64 } as f64;
    let share: Vec<f64> = per_cell.values().map(|d| *d as f64 / denom).collect();
    let entropy: f64 = share.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    let k = share.len();
    let transitions = cells.windows(2).filter(|w| w[0] != w[1]).count();

    let mut speeds = Vec::new();
    let (mut total_dist, mut moving_ms, mut timed_ms) = (0.0, 0i64, 0i64);
    for w in fixes.windows(2) {
        let d = haversine_m(w[0].1, w[0].2, w[1].1, w[1].2);
        total_dist += d;
        let dt = w[1].0 - w[0].0;
        if dt > 0 {
            let v = d / (dt as f64 / 1000.0);
            speeds.push(v);
            timed_ms += dt;
            if v > MOVING_SPEED_MPS {
                moving_ms += dt;
            }
        }
    }

    let lat_c = fixes.iter().map(|f| f.1).sum::<f64>() / n as f64;
    let lon_c = fixes.iter().map(|f| f.2).sum::<f64>() / n as f64;
    let rog = (fixes.iter().map(|f| haversine_m(f.1, f.2, lat_c, lon_c).powi(2)).sum::<f64>() / n as f64).sqrt();
    let max_from_first = fixes.iter().map(|f| haversine_m(fixes[0].1, fixes[0].2, f.1, f.2)).fold(0.0, f64::max);

    out[0] = entropy;
    out[1] = if k > 1 { entropy / (k as f64).ln() } else { 0.0 };
    out[2] = transitions as f64;
    out[3] = if timed_ms > 0 { 100.0 * moving_ms as f64 / timed_ms as f64 } else { 0.0 };
    out[4] = total_dist;
    out[5] = rog;
    out[6] = k as f64;
    out[7] = 100.0 * share.iter().copied().fold(0.0, f64::max);
    if !speeds.is_empty() {
        out[8] = stats::mean(&speeds);
        out[9] = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out[10] = stats::variance(&speeds).sqrt();
    }
    out[11] = max_from_first;
    out
}

/// Network block: WiFi / mobile connections established, dominant type
/// (enum index, by time held), and WiFi / mobile share of the window.
pub fn extract_network(events: &[(TimestampMs, NetworkType)], window: Window) -> [f64; 5] {
    if events.is_empty() {
        return [f64::NAN; 5];
    }
    let mut held = [0i64; 3];
    held[NetworkType::None.index()] = window.clamp(events[0].0) - window.start;
    let (mut wifi, mut mobile) = (0usize, 0usize);
    let mut prev: Option<NetworkType> = None;
    for (i, &(ts, kind)) in events.iter().enumerate() {
        if prev != Some(kind) {
            match kind {
                NetworkType::Wifi => wifi += 1,
                NetworkType::Mobile => mobile += 1,
                NetworkType::None => {}
            }
        }
        let until = events.get(i + 1).map_or(window.end, |e| e.0);
        held[kind.index()] += window.clamp(until) - window.clamp(ts);
        prev = Some(kind);
    }
    // Ties resolve to the lowest enum index.
    let dominant = (0..3).fold(0, |best, i| if held[i] > held[best] { i } else { best });
    let span = (window.end - window.start) as f64;
    [
        wifi as f64,
        mobile as f64,
        dominant as f64,
        held[NetworkType::Wifi.index()] as f64 / span,
        held[NetworkType::Mobile.index()] as f64 / span,
    ]
}

/// Weather block: one-hot of the modal condition (ties → lowest enum index)
/// followed by five statistics for each of the eight numeric channels.
pub fn extract_weather(samples: &[(TimestampMs, WeatherObs)]) -> [f64; 50] {
    let mut out = [f64::NAN; 50];
    if samples.is_empty() {
        return out;
    }
    let mut counts = [0usize; 10];
    for (_, w) in samples {
        counts[w.kind.index()] += 1;
    }
    let modal = (0..WeatherKind::ALL.len()).fold(0, |best, i| if counts[i] > counts[best] { i } else { best });
    for (i, slot) in out[..10].iter_mut().enumerate() {
        *slot = if i == modal { 1.0 } else { 0.0 };
    }
    for ch in 0..8 {
        let xs: Vec<f64> = samples.iter().map(|(_, w)| w.channels[ch]).collect();
        out[10 + 5 * ch..15 + 5 * ch].copy_from_slice(&stats::five(&xs));
    }
    out
}

/// Screen block (11 values). `on` and `unlock` switch the screen on,
/// `off` switches it off; interactions do not change state. Episodes are
/// clipped to the window.
pub fn extract_screen(events: &[(TimestampMs, ScreenEvent)], window: Window) -> [f64; 11] {
    if events.is_empty() {
        return [f64::NAN; 11];
    }
    let count = |e: ScreenEvent| events.iter().filter(|(_, k)| *k == e).count() as f64;
    let minutes = window.minutes();

    // Collapse into state-change points.
    let mut on = false;
    let mut since = window.start;
    let mut on_episodes: Vec<f64> = Vec::new();
    let mut longest_off = 0.0_f64;
    for &(ts, kind) in events {
        let t = window.clamp(ts);
        let next = match kind {
            ScreenEvent::On | ScreenEvent::Unlock => true,
            ScreenEvent::Off => false,
            ScreenEvent::Interaction => on,
        };
        if next != on {
            let span = to_minutes(t - since);
            if on {
                on_episodes.push(span);
            } else {
                longest_off = longest_off.max(span);
            }
            on = next;
            since = t;
        }
    }
    let tail = to_minutes(window.end - since);
    if on {
        on_episodes.push(tail);
    } else {
        longest_off = longest_off.max(tail);
    }

    let on_minutes: f64 = on_episodes.iter().sum();
    let (ep_mean, ep_max, ep_std) = if on_episodes.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            stats::mean(&on_episodes),
            on_episodes.iter().copied().fold(0.0, f64::max),
            stats::variance(&on_episodes).sqrt(),
        )
    };
    [
        count(ScreenEvent::Unlock) / minutes,
        count(ScreenEvent::Interaction) / minutes,
        count(ScreenEvent::On),
        count(ScreenEvent::Off),
        on_minutes,
        minutes - on_minutes,
        ep_mean,
        ep_max,
        ep_std,
        on_episodes.len() as f64,
        longest_off,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: Window = Window { start: 0, end: 180 * MINUTE_MS };

    fn m(min: i64) -> i64 {
        min * MINUTE_MS
    }

    #[test]
    fn constant_imu() {
        let s: Vec<_> = (0..50).map(|i| (i, [0.0, 0.0, 9.8])).collect();
        let f = extract_imu(&s);
        assert!((f[0] - 9.8).abs() < 1e-12);
        assert_eq!(f[1], 0.0);
        assert_eq!(&f[17..20], &[0.0, 0.0, 0.0]);
        assert_eq!(&f[11..17], &[0.0; 6]);
    }

    #[test]
    fn alternating_x_axis() {
        let s: Vec<_> = [1.0, -1.0, 1.0, -1.0].iter().enumerate().map(|(i, x)| (i as i64, [*x, 0.0, 0.0])).collect();
        let f = extract_imu(&s);
        assert_eq!(f[5], 0.0);
        assert_eq!(f[8], 1.0);
        assert_eq!(f[11], 0.0);
    }

    #[test]
    fn empty_blocks_are_nan() {
        assert!(extract_imu(&[]).iter().all(|v| v.is_nan()));
        assert!(extract_battery(&[], W).iter().all(|v| v.is_nan()));
        assert!(extract_location(&[], W).iter().all(|v| v.is_nan()));
        assert!(extract_network(&[], W).iter().all(|v| v.is_nan()));
        assert!(extract_weather(&[]).iter().all(|v| v.is_nan()));
        assert!(extract_screen(&[], W).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn battery_constant_and_single_charge() {
        let s: Vec<_> = (0..18).map(|i| (m(10 * i), 80.0, false)).collect();
        assert_eq!(extract_battery(&s, W), [80.0, 0.0, 80.0, 80.0, 80.0, 0.0, 0.0]);

        let s = vec![(m(0), 50.0, false), (m(10), 50.0, true), (m(40), 70.0, false)];
        let f = extract_battery(&s, W);
        assert_eq!(f[5], 1.0);
        assert_eq!(f[6], 30.0);
    }

    #[test]
    fn location_single_cell() {
        let s: Vec<_> = (0..10).map(|i| (m(18 * i), 35.6812, 139.7671)).collect();
        let f = extract_location(&s, W);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 0.0);
        assert_eq!(f[6], 1.0);
        assert_eq!(f[7], 100.0);
    }

    #[test]
    fn location_two_cells_equal_time() {
        let s = vec![(m(0), 35.0, 139.0), (m(90), 35.01, 139.0)];
        let f = extract_location(&s, W);
        assert!((f[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((f[1] - 1.0).abs() < 1e-12);
        assert_eq!(f[2], 1.0);
    }

    #[test]
    fn location_three_cells_shares() {
        // Shares 0.5, 0.25, 0.25 of the window.
        let s = vec![(m(0), 35.0, 139.0), (m(90), 35.01, 139.0), (m(135), 35.02, 139.0)];
        let f = extract_location(&s, W);
        let expected = -(0.5_f64 * 0.5_f64.ln() + 2.0 * 0.25 * 0.25_f64.ln());
        assert!((f[0] - expected).abs() < 1e-12);
        assert!((f[0] - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn location_single_fix() {
        let f = extract_location(&[(m(5), 35.0, 139.0)], W);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[4], 0.0);
        assert!(f[8].is_nan() && f[9].is_nan() && f[10].is_nan());
    }

    #[test]
    fn network_examples() {
        let f = extract_network(&[(0, NetworkType::Wifi)], W);
        assert_eq!(f, [1.0, 0.0, NetworkType::Wifi.index() as f64, 1.0, 0.0]);

        let ev: Vec<_> = (0..6)
            .map(|i| (m(30 * i), if i % 2 == 0 { NetworkType::Wifi } else { NetworkType::Mobile }))
            .collect();
        let f = extract_network(&ev, W);
        assert_eq!((f[0], f[1]), (3.0, 3.0));
        assert!((f[3] - 0.5).abs() < 1e-12 && (f[4] - 0.5).abs() < 1e-12);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn weather_modal_and_ties() {
        let obs = |k, t| WeatherObs { kind: k, channels: [t, 50.0, 1010.0, 2.0, 90.0, 10.0, 0.0, 0.0] };
        let s: Vec<_> = (0..5).map(|i| (i, obs(WeatherKind::Clear, 20.0))).collect();
        let f = extract_weather(&s);
        assert_eq!(f[WeatherKind::Clear.index()], 1.0);
        assert_eq!(f[..10].iter().sum::<f64>(), 1.0);
        assert_eq!(&f[10..15], &[20.0, 0.0, 20.0, 20.0, 20.0]);

        let s = vec![(0, obs(WeatherKind::Rain, 1.0)), (1, obs(WeatherKind::Clouds, 1.0))];
        let f = extract_weather(&s);
        assert_eq!(f[WeatherKind::Clouds.index()], 1.0);
        assert_eq!(f[WeatherKind::Rain.index()], 0.0);
    }

    #[test]
    fn screen_on_whole_window() {
        let f = extract_screen(&[(0, ScreenEvent::On)], W);
        assert_eq!(f[4], 180.0);
        assert_eq!(f[5], 0.0);
        assert_eq!(f[9], 1.0);
        assert_eq!(f[10], 0.0);
    }

    #[test]
    fn screen_unlock_rate() {
        let ev: Vec<_> = (0..6).map(|i| (m(30 * i), ScreenEvent::Unlock)).collect();
        let f = extract_screen(&ev, W);
        assert!((f[0] - 1.0 / 30.0).abs() < 1e-15);
    }
}
