#[path = "support/feature_oracle.rs"]
mod feature_oracle;

use nationmood::corpus::{NetworkType, ScreenEvent, SensorKind, Session, MINUTE_MS};
use nationmood::featurex::{assemble, assemble_all, FeatureRegistry, FEATURE_COUNT, GROUP_SIZES};
use nationmood::simgen::{generate_sessions, SimConfig};
use proptest::prelude::*;

fn sim_sessions(n: usize) -> Vec<Session> {
    let cfg = SimConfig { n_users: 12, days: 7, ..SimConfig::default() };
    let mut s = generate_sessions(&cfg).unwrap().sessions;
    s.retain(|x| !x.sensors.is_empty());
    s.truncate(n);
    s
}

#[test]
fn extractor_matches_brute_force_oracle() {
    let sessions = sim_sessions(200);
    assert_eq!(sessions.len(), 200);
    let reg = FeatureRegistry::standard();
    for s in &sessions {
        let got = assemble(s, reg);
        let want = feature_oracle::features(s);
        if let Some((i, g, w)) = feature_oracle::first_mismatch(&got.values, &want, 1e-9) {
            panic!("{} @ {}: {} = {g}, oracle {w}", s.user, s.window_start, reg.name(i));
        }
    }
}

#[test]
fn registry_shape() {
    let reg = FeatureRegistry::standard();
    let sizes: Vec<usize> = GROUP_SIZES.iter().map(|g| g.1).collect();
    assert_eq!(sizes, [23, 23, 5, 7, 12, 5, 50, 11]);
    assert_eq!(reg.len(), FEATURE_COUNT);
    let mut names: Vec<&str> = reg.names().collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), 136);
    for (kind, _) in GROUP_SIZES {
        for i in FeatureRegistry::group_range(kind) {
            assert_eq!(reg.group_of(i), kind);
        }
    }
    assert_eq!(reg.group_of(reg.index_of("mean-x-gyro").unwrap()), SensorKind::Gyroscope);
}

#[test]
fn empty_session_has_zero_coverage() {
    let s = Session {
        user: "u".into(),
        window_start: 0,
        window_ms: 180 * MINUTE_MS,
        tz_offset_min: 540,
        sensors: Default::default(),
        queries: vec![],
        reports: vec![],
    };
    let fv = assemble(&s, FeatureRegistry::standard());
    assert_eq!(fv.coverage, 0.0);
    assert!(fv.values.iter().all(|v| v.is_nan()));
}

#[test]
fn parallel_extraction_keeps_order() {
    let sessions = sim_sessions(50);
    let all = assemble_all(&sessions, FeatureRegistry::standard());
    for (s, fv) in sessions.iter().zip(&all) {
        assert_eq!(fv.key, s.key());
    }
}

fn screen_kind() -> impl Strategy<Value = ScreenEvent> {
    prop_oneof![Just(ScreenEvent::On), Just(ScreenEvent::Off), Just(ScreenEvent::Unlock), Just(ScreenEvent::Interaction)]
}

fn net_kind() -> impl Strategy<Value = NetworkType> {
    prop_oneof![Just(NetworkType::Wifi), Just(NetworkType::Mobile), Just(NetworkType::None)]
}

fn session_with(
    screen: Vec<(i64, ScreenEvent)>,
    network: Vec<(i64, NetworkType)>,
    battery: Vec<(i64, f64, bool)>,
) -> Session {
    let mut s = Session {
        user: "p".into(),
        window_start: 0,
        window_ms: 180 * MINUTE_MS,
        tz_offset_min: 540,
        sensors: Default::default(),
        queries: vec![],
        reports: vec![],
    };
    s.sensors.screen = screen;
    s.sensors.network = network;
    s.sensors.battery = battery;
    s.sensors.screen.sort_by_key(|e| e.0);
    s.sensors.network.sort_by_key(|e| e.0);
    s.sensors.battery.sort_by_key(|e| e.0);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // Time-share features partition the window and agree with the oracle
    // on arbitrary (distinct-time) event sequences.
    #[test]
    fn step_channels_partition_window(
        screen in proptest::collection::btree_map(0i64..180, screen_kind(), 1..12),
        network in proptest::collection::btree_map(0i64..180, net_kind(), 1..8),
        battery in proptest::collection::btree_map(0i64..180, (0.0f64..100.0, any::<bool>()), 1..8),
    ) {
        let s = session_with(
            screen.into_iter().map(|(t, k)| (t * MINUTE_MS, k)).collect(),
            network.into_iter().map(|(t, k)| (t * MINUTE_MS, k)).collect(),
            battery.into_iter().map(|(t, (l, c))| (t * MINUTE_MS, l, c)).collect(),
        );
        let reg = FeatureRegistry::standard();
        let fv = assemble(&s, reg);
        let v = |n: &str| fv.values[reg.index_of(n).unwrap()];
        prop_assert!((v("on-minutes-screen") + v("off-minutes-screen") - 180.0).abs() < 1e-9);
        prop_assert!(v("wifi-rate-net") + v("mobile-rate-net") <= 1.0 + 1e-12);
        prop_assert!(v("charge-minutes-battery") >= 0.0 && v("charge-minutes-battery") <= 180.0);
        let want = feature_oracle::features(&s);
        prop_assert_eq!(feature_oracle::first_mismatch(&fv.values, &want, 1e-9), None);
    }
}
