use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Romanized names of the 47 prefectures in JIS X 0401 order.
pub const PREFECTURE_NAMES: [&str; 47] = [
    "Hokkaido", "Aomori", "Iwate", "Miyagi", "Akita", "Yamagata", "Fukushima", "Ibaraki",
    "Tochigi", "Gunma", "Saitama", "Chiba", "Tokyo", "Kanagawa", "Niigata", "Toyama",
    "Ishikawa", "Fukui", "Yamanashi", "Nagano", "Gifu", "Shizuoka", "Aichi", "Mie", "Shiga",
    "Kyoto", "Osaka", "Hyogo", "Nara", "Wakayama", "Tottori", "Shimane", "Okayama",
    "Hiroshima", "Yamaguchi", "Tokushima", "Kagawa", "Ehime", "Kochi", "Fukuoka", "Saga",
    "Nagasaki", "Kumamoto", "Oita", "Miyazaki", "Kagoshima", "Okinawa",
];

/// Approximate resident population in millions (2020 census), same order.
/// Used by the simulator as the default user distribution.
pub const PREFECTURE_POPULATION_M: [f64; 47] = [
    5.22, 1.24, 1.21, 2.30, 0.96, 1.07, 1.83, 2.87, 1.93, 1.94, 7.34, 6.28, 14.05, 9.24, 2.20,
    1.03, 1.13, 0.77, 0.81, 2.05, 1.98, 3.63, 7.54, 1.77, 1.41, 2.58, 8.84, 5.47, 1.32, 0.92,
    0.55, 0.67, 1.89, 2.80, 1.34, 0.72, 0.95, 1.33, 0.69, 5.14, 0.81, 1.31, 1.74, 1.12, 1.07,
    1.59, 1.47,
];

/// One of Japan's 47 prefectures, stored as its 0-based JIS index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Prefecture(u8);

impl Prefecture {
    pub const COUNT: usize = 47;

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then(|| Prefecture(index as u8))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn name(self) -> &'static str {
        PREFECTURE_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = Prefecture> {
        (0..Self::COUNT as u8).map(Prefecture)
    }
}

impl fmt::Display for Prefecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown prefecture {0:?}")]
pub struct UnknownPrefecture(pub String);

impl FromStr for Prefecture {
    type Err = UnknownPrefecture;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        PREFECTURE_NAMES
            .iter()
            .position(|name| name.eq_ignore_ascii_case(s))
            .map(|i| Prefecture(i as u8))
            .ok_or_else(|| UnknownPrefecture(s.to_string()))
    }
}

impl TryFrom<String> for Prefecture {
    type Error = UnknownPrefecture;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Prefecture> for String {
    fn from(p: Prefecture) -> String {
        p.name().to_string()
    }
}

/// Parse a profile prefecture column: a known name, or `unknown` / empty.
pub fn parse_residence(s: &str) -> Result<Option<Prefecture>, UnknownPrefecture> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("unknown") {
        Ok(None)
    } else {
        t.parse().map(Some)
    }
}

pub fn residence_label(p: Option<Prefecture>) -> &'static str {
    p.map_or("unknown", Prefecture::name)
}
