//! Brute-force reference for the 136-value session feature vector.
//!
//! Written against the feature definitions only. Step-function channels
//! are evaluated segment by segment, with the state of each segment found
//! by rescanning every event, so the code shares no structure with the
//! incremental extractor.

#![allow(dead_code)]

use std::collections::HashMap;

use nationmood::corpus::{NetworkType, ScreenEvent, Session, WeatherKind, MINUTE_MS};

const R: f64 = 6_371_008.8;

fn mean(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

fn moment(xs: &[f64], k: i32) -> f64 {
    let m = mean(xs);
    let mut s = 0.0;
    for x in xs {
        s += (x - m).powi(k);
    }
    s / xs.len() as f64
}

fn flat(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn five(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return vec![f64::NAN; 5];
    }
    let sd = if flat(xs) { 0.0 } else { moment(xs, 2).sqrt() };
    let mut lo = xs[0];
    let mut hi = xs[0];
    for &x in xs {
        if x < lo {
            lo = x;
        }
        if x > hi {
            hi = x;
        }
    }
    vec![mean(xs), sd, median(xs), lo, hi]
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - ma) * (b[i] - mb);
    }
    s / a.len() as f64
}

fn imu(s: &[(i64, [f64; 3])]) -> Vec<f64> {
    if s.is_empty() {
        return vec![f64::NAN; 23];
    }
    let ax: Vec<Vec<f64>> = (0..3).map(|k| s.iter().map(|r| r.1[k]).collect()).collect();
    let mag: Vec<f64> = s.iter().map(|r| r.1.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut out = five(&mag);
    for a in &ax {
        out.push(mean(a));
    }
    for a in &ax {
        out.push(moment(a, 2));
    }
    for a in &ax {
        out.push(if flat(a) { 0.0 } else { moment(a, 3) / moment(a, 2).powf(1.5) });
    }
    for a in &ax {
        out.push(if flat(a) { 0.0 } else { moment(a, 4) / moment(a, 2).powi(2) - 3.0 });
    }
    let pairs = [(0, 1), (1, 2), (2, 0)];
    for (i, j) in pairs {
        let (a, b) = (&ax[i], &ax[j]);
        out.push(if flat(a) || flat(b) { 0.0 } else { cov(a, b) / (moment(a, 2) * moment(b, 2)).sqrt() });
    }
    for (i, j) in pairs {
        out.push(cov(&ax[i], &ax[j]));
    }
    out
}

/// Breakpoints of a step function: window bounds plus clamped event times.
fn segments(times: &[i64], start: i64, end: i64) -> Vec<(i64, i64)> {
    let mut b: Vec<i64> = times.iter().map(|t| (*t).clamp(start, end)).collect();
    b.push(start);
    b.push(end);
    b.sort();
    b.dedup();
    b.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Index of the last event at or before `t`, scanning everything.
fn last_at<T>(events: &[(i64, T)], t: i64, keep: impl Fn(&T) -> bool) -> Option<usize> {
    let mut found = None;
    for (i, e) in events.iter().enumerate() {
        if e.0 <= t && keep(&e.1) {
            found = Some(i);
        }
    }
    found
}

fn battery(s: &[(i64, f64, bool)], start: i64, end: i64) -> Vec<f64> {
    if s.is_empty() {
        return vec![f64::NAN; 7];
    }
    let levels: Vec<f64> = s.iter().map(|r| r.1).collect();
    let mut out = five(&levels);
    let mut episodes = 0;
    for i in 0..s.len() {
        if s[i].2 && (i == 0 || !s[i - 1].2) {
            episodes += 1;
        }
    }
    let ev: Vec<(i64, bool)> = s.iter().map(|r| (r.0, r.2)).collect();
    let times: Vec<i64> = ev.iter().map(|e| e.0).collect();
    let mut charging = 0i64;
    for (a, b) in segments(&times, start, end) {
        if last_at(&ev, a, |_| true).is_some_and(|i| ev[i].1) {
            charging += b - a;
        }
    }
    out.push(episodes as f64);
    out.push(charging as f64 / MINUTE_MS as f64);
    out
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let h = ((p2 - p1) / 2.0).sin().powi(2) + p1.cos() * p2.cos() * ((b.1 - a.1).to_radians() / 2.0).sin().powi(2);
    2.0 * R * h.sqrt().atan2((1.0 - h).max(0.0).sqrt())
}

fn location(f: &[(i64, f64, f64)], start: i64, end: i64) -> Vec<f64> {
    if f.is_empty() {
        return vec![f64::NAN; 12];
    }
    let n = f.len();
    let cell = |i: usize| ((f[i].1 * 1000.0).round() as i64, (f[i].2 * 1000.0).round() as i64);
    let mut weight: HashMap<(i64, i64), f64> = HashMap::new();
    let dwell: Vec<i64> = (0..n)
        .map(|i| {
            let until = if i + 1 < n { f[i + 1].0 } else { end };
            (until.clamp(start, end) - f[i].0.clamp(start, end)).max(0)
        })
        .collect();
    let total: i64 = dwell.iter().sum();
    for i in 0..n {
        *weight.entry(cell(i)).or_default() += if total > 0 { dwell[i] as f64 } else { 1.0 };
    }
    let sum: f64 = weight.values().sum();
    let mut entropy = 0.0;
    let mut top = 0.0_f64;
    for w in weight.values() {
        let p = w / sum;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
        top = top.max(p);
    }
    let k = weight.len();
    let transitions = (1..n).filter(|&i| cell(i) != cell(i - 1)).count();
    let mut total_d = 0.0;
    let mut speeds = Vec::new();
    let (mut moving, mut timed) = (0i64, 0i64);
    for i in 1..n {
        let d = dist((f[i - 1].1, f[i - 1].2), (f[i].1, f[i].2));
        total_d += d;
        let dt = f[i].0 - f[i - 1].0;
        if dt > 0 {
            let v = d * 1000.0 / dt as f64;
            speeds.push(v);
            timed += dt;
            if v > 1.0 {
                moving += dt;
            }
        }
    }
    let c = (mean(&f.iter().map(|x| x.1).collect::<Vec<_>>()), mean(&f.iter().map(|x| x.2).collect::<Vec<_>>()));
    let rog = mean(&f.iter().map(|x| dist((x.1, x.2), c).powi(2)).collect::<Vec<_>>()).sqrt();
    let far = f.iter().map(|x| dist((f[0].1, f[0].2), (x.1, x.2))).fold(0.0, f64::max);
    let (sm, smax, ssd) = if speeds.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (mean(&speeds), speeds.iter().copied().fold(f64::MIN, f64::max), moment(&speeds, 2).sqrt())
    };
    vec![
        entropy,
        if k > 1 { entropy / (k as f64).ln() } else { 0.0 },
        transitions as f64,
        if timed > 0 { 100.0 * moving as f64 / timed as f64 } else { 0.0 },
        total_d,
        rog,
        k as f64,
        100.0 * top,
        sm,
        smax,
        ssd,
        far,
    ]
}

fn network(e: &[(i64, NetworkType)], start: i64, end: i64) -> Vec<f64> {
    if e.is_empty() {
        return vec![f64::NAN; 5];
    }
    let mut wifi = 0;
    let mut mobile = 0;
    for i in 0..e.len() {
        if i == 0 || e[i].1 != e[i - 1].1 {
            match e[i].1 {
                NetworkType::Wifi => wifi += 1,
                NetworkType::Mobile => mobile += 1,
                NetworkType::None => {}
            }
        }
    }
    let times: Vec<i64> = e.iter().map(|x| x.0).collect();
    let mut held = [0i64; 3];
    for (a, b) in segments(&times, start, end) {
        let state = last_at(e, a, |_| true).map_or(NetworkType::None, |i| e[i].1);
        held[state.index()] += b - a;
    }
    let mut dom = 0;
    for i in 1..3 {
        if held[i] > held[dom] {
            dom = i;
        }
    }
    let span = (end - start) as f64;
    vec![
        wifi as f64,
        mobile as f64,
        dom as f64,
        held[NetworkType::Wifi.index()] as f64 / span,
        held[NetworkType::Mobile.index()] as f64 / span,
    ]
}

fn weather(s: &[(i64, nationmood::corpus::WeatherObs)]) -> Vec<f64> {
    if s.is_empty() {
        return vec![f64::NAN; 50];
    }
    let kinds = WeatherKind::ALL;
    let counts: Vec<usize> = kinds.iter().map(|k| s.iter().filter(|x| x.1.kind == *k).count()).collect();
    let best = *counts.iter().max().unwrap();
    let modal = counts.iter().position(|c| *c == best).unwrap();
    let mut out: Vec<f64> = (0..kinds.len()).map(|i| if i == modal { 1.0 } else { 0.0 }).collect();
    for ch in 0..8 {
        out.extend(five(&s.iter().map(|x| x.1.channels[ch]).collect::<Vec<_>>()));
    }
    out
}

fn screen(e: &[(i64, ScreenEvent)], start: i64, end: i64) -> Vec<f64> {
    if e.is_empty() {
        return vec![f64::NAN; 11];
    }
    let minutes = (end - start) as f64 / MINUTE_MS as f64;
    let count = |k: ScreenEvent| e.iter().filter(|x| x.1 == k).count() as f64;
    let switching = |k: &ScreenEvent| *k != ScreenEvent::Interaction;
    let times: Vec<i64> = e.iter().map(|x| x.0).collect();
    // Merge equal-state segments into runs.
    let mut runs: Vec<(bool, f64)> = Vec::new();
    for (a, b) in segments(&times, start, end) {
        let on = last_at(e, a, switching).is_some_and(|i| e[i].1 != ScreenEvent::Off);
        let len = (b - a) as f64 / MINUTE_MS as f64;
        match runs.last_mut() {
            Some(r) if r.0 == on => r.1 += len,
            _ => runs.push((on, len)),
        }
    }
    let on: Vec<f64> = runs.iter().filter(|r| r.0).map(|r| r.1).collect();
    let off_max = runs.iter().filter(|r| !r.0).map(|r| r.1).fold(0.0, f64::max);
    let on_total: f64 = on.iter().sum();
    let (m, mx, sd) = if on.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (mean(&on), on.iter().copied().fold(0.0, f64::max), moment(&on, 2).sqrt())
    };
    vec![
        count(ScreenEvent::Unlock) / minutes,
        count(ScreenEvent::Interaction) / minutes,
        count(ScreenEvent::On),
        count(ScreenEvent::Off),
        on_total,
        minutes - on_total,
        m,
        mx,
        sd,
        on.len() as f64,
        off_max,
    ]
}

pub fn features(s: &Session) -> Vec<f64> {
    let (a, b) = (s.window_start, s.window_start + s.window_ms);
    let x = &s.sensors;
    let mut v = imu(&x.accelerometer);
    v.extend(imu(&x.gyroscope));
    v.extend(five(&x.barometer.iter().map(|r| r.1).collect::<Vec<_>>()));
    v.extend(battery(&x.battery, a, b));
    v.extend(location(&x.location, a, b));
    v.extend(network(&x.network, a, b));
    v.extend(weather(&x.weather));
    v.extend(screen(&x.screen, a, b));
    v
}

/// Index and both values of the first entry differing beyond `tol`
/// (relative above magnitude 1). NaN only matches NaN.
pub fn first_mismatch(got: &[f64], want: &[f64], tol: f64) -> Option<(usize, f64, f64)> {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).enumerate().find_map(|(i, (g, w))| {
        let ok = if w.is_nan() || g.is_nan() { w.is_nan() && g.is_nan() } else { (g - w).abs() <= tol * w.abs().max(1.0) };
        (!ok).then_some((i, *g, *w))
    })
}
