use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{SensorKind, WeatherKind, WEATHER_CHANNELS};

/// Feature block sizes per sensor group, in vector order.
pub const GROUP_SIZES: [(SensorKind, usize); 8] = [
    (SensorKind::Accelerometer, 23),
    (SensorKind::Gyroscope, 23),
    (SensorKind::Barometer, 5),
    (SensorKind::Battery, 7),
    (SensorKind::Location, 12),
    (SensorKind::Network, 5),
    (SensorKind::Weather, 50),
    (SensorKind::Screen, 11),
];

pub const FEATURE_COUNT: usize = 136;

const _: () = {
    let mut total = 0;
    let mut i = 0;
    while i < GROUP_SIZES.len() {
        total += GROUP_SIZES[i].1;
        i += 1;
    }
    assert!(total == FEATURE_COUNT);
};

pub const STAT_NAMES: [&str; 5] = ["mean", "std", "median", "min", "max"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub group: String,
    pub index: usize,
}

/// Immutable, ordered catalog of every session feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub fingerprint: String,
    pub features: Vec<FeatureSpec>,
}

fn group_suffix(kind: SensorKind) -> &'static str {
    match kind {
        SensorKind::Accelerometer => "acc",
        SensorKind::Gyroscope => "gyro",
        SensorKind::Barometer => "baro",
        SensorKind::Battery => "battery",
        SensorKind::Location => "loc",
        SensorKind::Network => "net",
        SensorKind::Weather => "weather",
        SensorKind::Screen => "screen",
    }
}

fn group_names(kind: SensorKind) -> Vec<String> {
    let sfx = group_suffix(kind);
    let stats = |what: &str| STAT_NAMES.iter().map(move |s| format!("{s}-{what}")).collect::<Vec<_>>();
    let bare: Vec<String> = match kind {
        SensorKind::Accelerometer | SensorKind::Gyroscope => {
            let mut v = stats("magnitude");
            for family in ["mean", "var", "skew", "kurtosis"] {
                v.extend(["x", "y", "z"].iter().map(|a| format!("{family}-{a}")));
            }
            for family in ["corr", "cov"] {
                v.extend(["xy", "yz", "zx"].iter().map(|p| format!("{family}-{p}")));
            }
            v
        }
        SensorKind::Barometer => stats("pressure"),
        SensorKind::Battery => {
            let mut v = stats("level");
            v.push("charge-count".into());
            v.push("charge-minutes".into());
            v
        }
        SensorKind::Location => [
            "entropy",
            "normalized-entropy",
            "transitions",
            "moving-percent",
            "total-distance",
            "radius-of-gyration",
            "unique-clusters",
            "top-cluster-percent",
            "mean-speed",
            "max-speed",
            "std-speed",
            "max-distance-from-first",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        SensorKind::Network => ["wifi-connections", "mobile-connections", "most-frequent-type", "wifi-rate", "mobile-rate"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        SensorKind::Weather => {
            let mut v: Vec<String> = WeatherKind::ALL.iter().map(|k| format!("type-{k}")).collect();
            for ch in WEATHER_CHANNELS {
                v.extend(stats(ch));
            }
            v
        }
        SensorKind::Screen => [
            "unlocks-per-min",
            "interactions-per-min",
            "on-events",
            "off-events",
            "on-minutes",
            "off-minutes",
            "mean-on-episode-min",
            "max-on-episode-min",
            "std-on-episode-min",
            "on-episodes",
            "longest-off-episode-min",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    };
    bare.into_iter().map(|n| format!("{n}-{sfx}")).collect()
}

impl FeatureRegistry {
    fn build() -> Self {
        let mut features = Vec::with_capacity(FEATURE_COUNT);
        for (kind, size) in GROUP_SIZES {
            let names = group_names(kind);
            assert_eq!(names.len(), size, "feature block size for {kind}");
            for name in names {
                let index = features.len();
                features.push(FeatureSpec { name, group: kind.as_str().to_string(), index });
            }
        }
        let mut hasher = Sha256::new();
        for f in &features {
            hasher.update(format!("{}\t{}\t{}\n", f.index, f.group, f.name).as_bytes());
        }
        let fingerprint = hex::encode(&hasher.finalize()[..8]);
        FeatureRegistry { fingerprint, features }
    }

    /// The canonical 136-feature registry.
    pub fn standard() -> &'static FeatureRegistry {
        static REGISTRY: OnceLock<FeatureRegistry> = OnceLock::new();
        REGISTRY.get_or_init(Self::build)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.features[index].name
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn group_of(&self, index: usize) -> SensorKind {
        self.features[index].group.parse().expect("registry groups are sensor kinds")
    }

    pub fn group_range(kind: SensorKind) -> Range<usize> {
        let mut start = 0;
        for (k, size) in GROUP_SIZES {
            if k == kind {
                return start..start + size;
            }
            start += size;
        }
        unreachable!("every sensor kind has a feature block")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }
}
