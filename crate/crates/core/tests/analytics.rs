use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Datelike, Duration, NaiveDate};
use nationmood::analytics::{correlate_with_cases, event_gap, pearson, weekday_rhythm};
use nationmood::corpus::{CaseCountRecord, CaseScope, Prefecture, SessionKey, UserProfile, HOUR_MS};
use nationmood::moodagg::{aggregate, relative_series, Aggregator, Bucket, Granularity, RelativeMode, ScoredSession, Scope};
use proptest::prelude::*;

/// Textbook one-pass form, written independently of the centered version.
fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

proptest! {
    #[test]
    fn pearson_matches_oracle(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            let o = pearson_oracle(&x, &y);
            prop_assume!(o.is_finite());
            prop_assert!((r - o).abs() < 1e-9, "{} vs {}", r, o);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn pearson_affine_invariance(
        pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        a in 0.5f64..5.0, b in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((pearson(&xs, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&x, &neg).unwrap() + r).abs() < 1e-9);
        }
    }

    // Up-counts recounted by walking every calendar day of the range.
    #[test]
    fn rhythm_matches_day_walk(
        scores in proptest::collection::vec(proptest::option::weighted(0.9, -3.0f64..3.0), 2..120),
        holiday_idx in proptest::collection::btree_set(0usize..120, 0..6),
        lo in 0usize..10, span in 5usize..120,
    ) {
        let start = date(2020, 1, 1);
        let daily: BTreeMap<NaiveDate, f64> = scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|v| (start + Duration::days(i as i64), v)))
            .collect();
        prop_assume!(daily.len() >= 2);
        let holidays: BTreeSet<NaiveDate> = holiday_idx.iter().map(|i| start + Duration::days(*i as i64)).collect();
        let from = start + Duration::days(lo as i64);
        let to = from + Duration::days(span as i64);
        let r = weekday_rhythm(&daily, &holidays, from, to).unwrap();
        let mut up = [0usize; 7];
        let mut counted = [0usize; 7];
        let mut d = from;
        while d <= to {
            let p = d - Duration::days(1);
            if let (Some(a), Some(b)) = (daily.get(&d), daily.get(&p)) {
                if !holidays.contains(&d) && !holidays.contains(&p) {
                    let w = d.weekday().num_days_from_monday() as usize;
                    counted[w] += 1;
                    if a >= b {
                        up[w] += 1;
                    }
                }
            }
            d += Duration::days(1);
        }
        for w in 0..7 {
            prop_assert_eq!(r.weekdays[w].up, up[w]);
            prop_assert_eq!(r.weekdays[w].counted, counted[w]);
        }
    }
}

#[test]
fn correlation_uses_matching_prefectures_on_date() {
    let d = date(2020, 4, 10);
    let prefs: Vec<Prefecture> = Prefecture::all().take(5).collect();
    let rel: BTreeMap<Prefecture, f64> = prefs.iter().enumerate().map(|(i, p)| (*p, 1.0 - 0.01 * i as f64)).collect();
    let mut cases: Vec<CaseCountRecord> = prefs
        .iter()
        .enumerate()
        .map(|(i, p)| CaseCountRecord { date: d, scope: CaseScope::Prefecture(*p), new_cases: 10 * i as u64 })
        .collect();
    cases.push(CaseCountRecord { date: d, scope: CaseScope::Nation, new_cases: 100 });
    cases.push(CaseCountRecord { date: d.succ_opt().unwrap(), scope: CaseScope::Prefecture(prefs[0]), new_cases: 999 });
    let c = correlate_with_cases(&rel, &cases, d).unwrap();
    assert_eq!(c.pairs.len(), 5);
    assert!((c.r + 1.0).abs() < 1e-12);
}

#[test]
fn event_gap_ratio_and_omissions() {
    let series: BTreeMap<i64, f64> = (0..96).filter(|h| *h != 50).map(|h| (h * HOUR_MS, 2.0 + (h % 24) as f64)).collect();
    let t = event_gap(&series, 48 * HOUR_MS, &[0, 24 * HOUR_MS], 24 * HOUR_MS, HOUR_MS).unwrap();
    assert_eq!(t.omitted, vec![2 * HOUR_MS]);
    assert_eq!(t.points.len(), 23);
    assert!(t.points.iter().all(|p| (p.ratio - 1.0).abs() < 1e-12));
    assert!(event_gap(&series, 0, &[], 24 * HOUR_MS, HOUR_MS).is_err());
}

fn scored(user: usize, hour: i64, score: f64) -> ScoredSession {
    ScoredSession { key: SessionKey { user: format!("u{user}"), window_start: hour * HOUR_MS }, tz_offset_min: 540, score }
}

fn scores_strategy() -> impl Strategy<Value = Vec<ScoredSession>> {
    proptest::collection::vec((0usize..8, 0i64..96, -5.0f64..5.0), 1..200)
        .prop_map(|v| v.into_iter().map(|(u, h, s)| scored(u, h, s)).collect())
}

fn profiles() -> Vec<UserProfile> {
    (0..8)
        .map(|u| UserProfile {
            user: format!("u{u}"),
            prefecture: if u % 3 == 0 { None } else { Prefecture::from_index(u % 2) },
            tz_offset_min: 540,
        })
        .collect()
}

proptest! {
    // Any sharding and merge order gives bit-identical points.
    #[test]
    fn aggregation_independent_of_sharding(scores in scores_strategy(), cut in 0usize..200, rev in any::<bool>()) {
        let pref: HashMap<String, Option<Prefecture>> = profiles().into_iter().map(|p| (p.user, p.prefecture)).collect();
        let cut = cut.min(scores.len());
        let shard = |part: &[ScoredSession]| {
            let mut a = Aggregator::new(Granularity::ThreeHour);
            for s in part {
                a.add(s, pref[&s.key.user]);
            }
            a
        };
        let (mut a, b) = (shard(&scores[..cut]), shard(&scores[cut..]));
        let merged = if rev {
            let mut b = b;
            b.merge(a);
            b.finish()
        } else {
            a.merge(b);
            a.finish()
        };
        prop_assert_eq!(merged, aggregate(&scores, &profiles(), Granularity::ThreeHour));
    }

    // Mean of per-user means, recomputed by brute force.
    #[test]
    fn daily_nation_mean_is_mean_of_user_means(scores in scores_strategy()) {
        let pts = aggregate(&scores, &profiles(), Granularity::Daily);
        for p in pts.iter().filter(|p| p.scope == Scope::Nation) {
            let Bucket::Day(day) = p.bucket else { panic!() };
            let mut per_user: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for s in &scores {
                if nationmood::corpus::local_date(s.key.window_start, 540) == day {
                    per_user.entry(&s.key.user).or_default().push(s.score);
                }
            }
            let m = per_user.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).sum::<f64>() / per_user.len() as f64;
            prop_assert_eq!(p.user_count, per_user.len());
            prop_assert!((p.mean_score - m).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_baseline_means_to_one(scores in scores_strategy()) {
        let shifted: Vec<ScoredSession> = scores.iter().map(|s| ScoredSession { score: s.score + 10.0, ..s.clone() }).collect();
        let pts = aggregate(&shifted, &profiles(), Granularity::Daily);
        let base: BTreeSet<NaiveDate> = pts.iter().map(|p| p.bucket.date(540)).collect();
        let r = relative_series(&pts, &base, RelativeMode::Ratio).unwrap();
        let mut per_scope: BTreeMap<Scope, Vec<f64>> = BTreeMap::new();
        for p in &r.points {
            per_scope.entry(p.scope).or_default().push(p.value);
        }
        for v in per_scope.values() {
            prop_assert!((v.iter().sum::<f64>() / v.len() as f64 - 1.0).abs() < 1e-12);
        }
    }
}
