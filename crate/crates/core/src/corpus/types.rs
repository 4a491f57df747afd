use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::prefecture::Prefecture;
use super::CorpusError;

/// UTC timestamp in milliseconds since the Unix epoch.
pub type TimestampMs = i64;

pub const MINUTE_MS: i64 = 60_000;
pub const HOUR_MS: i64 = 60 * MINUTE_MS;
pub const DAY_MS: i64 = 24 * HOUR_MS;
pub const DEFAULT_TZ_OFFSET_MIN: i32 = 540;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} {:?}", stringify!($name), other)),
                }
            }
        }
    };
}

string_enum!(
    /// Sensor channels collected by the study app.
    SensorKind {
        Accelerometer => "accelerometer",
        Gyroscope => "gyroscope",
        Barometer => "barometer",
        Battery => "battery",
        Location => "location",
        Network => "network",
        Weather => "weather",
        Screen => "screen",
    }
);

string_enum!(
    NetworkType {
        Wifi => "wifi",
        Mobile => "mobile",
        None => "none",
    }
);

string_enum!(
    /// Weather condition groups; `Other` absorbs anything unrecognized.
    WeatherKind {
        Clear => "clear",
        Clouds => "clouds",
        Rain => "rain",
        Drizzle => "drizzle",
        Thunderstorm => "thunderstorm",
        Snow => "snow",
        Mist => "mist",
        Fog => "fog",
        Haze => "haze",
        Other => "other",
    }
);

string_enum!(
    ScreenEvent {
        On => "on",
        Off => "off",
        Unlock => "unlock",
        Interaction => "interaction",
    }
);

/// Numeric weather channels, in payload and feature order.
pub const WEATHER_CHANNELS: [&str; 8] = [
    "temperature",
    "humidity",
    "pressure",
    "wind-speed",
    "wind-direction",
    "cloudiness",
    "rain-1h",
    "snow-1h",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherObs {
    pub kind: WeatherKind,
    pub channels: [f64; 8],
}

/// Sensor-specific payload of one reading.
#[derive(Debug, Clone, PartialEq)]
pub enum SensorReading {
    Accelerometer([f64; 3]),
    Gyroscope([f64; 3]),
    Barometer(f64),
    Battery { level: f64, charging: bool },
    Location { lat: f64, lon: f64 },
    Network(NetworkType),
    Weather(Box<WeatherObs>),
    Screen(ScreenEvent),
}

impl SensorReading {
    pub fn kind(&self) -> SensorKind {
        match self {
            SensorReading::Accelerometer(_) => SensorKind::Accelerometer,
            SensorReading::Gyroscope(_) => SensorKind::Gyroscope,
            SensorReading::Barometer(_) => SensorKind::Barometer,
            SensorReading::Battery { .. } => SensorKind::Battery,
            SensorReading::Location { .. } => SensorKind::Location,
            SensorReading::Network(_) => SensorKind::Network,
            SensorReading::Weather(_) => SensorKind::Weather,
            SensorReading::Screen(_) => SensorKind::Screen,
        }
    }

    /// Range and finiteness checks on the payload.
    pub fn validate(&self) -> Result<(), String> {
        fn finite(name: &str, v: f64) -> Result<(), String> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} is not finite"))
            }
        }
        match self {
            SensorReading::Accelerometer(v) | SensorReading::Gyroscope(v) => {
                v.iter().try_for_each(|x| finite("axis value", *x))
            }
            SensorReading::Barometer(p) => finite("pressure", *p),
            SensorReading::Battery { level, .. } => {
                finite("battery level", *level)?;
                if (0.0..=100.0).contains(level) {
                    Ok(())
                } else {
                    Err(format!("battery level {level} outside [0, 100]"))
                }
            }
            SensorReading::Location { lat, lon } => {
                finite("latitude", *lat)?;
                finite("longitude", *lon)?;
                if !(-90.0..=90.0).contains(lat) {
                    return Err(format!("latitude {lat} outside [-90, 90]"));
                }
                if !(-180.0..=180.0).contains(lon) {
                    return Err(format!("longitude {lon} outside [-180, 180]"));
                }
                Ok(())
            }
            SensorReading::Weather(w) => w.channels.iter().try_for_each(|x| finite("weather channel", *x)),
            SensorReading::Network(_) | SensorReading::Screen(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSample {
    pub user: String,
    pub ts: TimestampMs,
    pub reading: SensorReading,
}

/// 7-level Likert self-report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Likert(u8);

impl Likert {
    pub fn new(value: i64) -> Result<Self, CorpusError> {
        if (1..=7).contains(&value) {
            Ok(Likert(value as u8))
        } else {
            Err(CorpusError::Validation(format!("likert value {value} outside 1..=7")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoodReport {
    pub user: String,
    pub ts: TimestampMs,
    pub likert: Likert,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEvent {
    pub user: String,
    pub ts: TimestampMs,
    pub raw_query: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user: String,
    pub prefecture: Option<Prefecture>,
    pub tz_offset_min: i32,
}

impl UserProfile {
    pub fn unknown(user: &str) -> Self {
        UserProfile { user: user.to_string(), prefecture: None, tz_offset_min: DEFAULT_TZ_OFFSET_MIN }
    }
}

/// Three-valued mood label: -1 negative, 0 neutral, +1 positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum MoodClass {
    Negative,
    Neutral,
    Positive,
}

impl MoodClass {
    pub const ALL: [MoodClass; 3] = [MoodClass::Negative, MoodClass::Neutral, MoodClass::Positive];

    pub fn value(self) -> i8 {
        match self {
            MoodClass::Negative => -1,
            MoodClass::Neutral => 0,
            MoodClass::Positive => 1,
        }
    }

    /// Dense index 0..3 in the order negative, neutral, positive.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            -1 => Some(MoodClass::Negative),
            0 => Some(MoodClass::Neutral),
            1 => Some(MoodClass::Positive),
            _ => None,
        }
    }
}

impl From<MoodClass> for i8 {
    fn from(c: MoodClass) -> i8 {
        c.value()
    }
}

impl TryFrom<i8> for MoodClass {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        MoodClass::from_value(v).ok_or_else(|| format!("mood class {v} outside {{-1, 0, 1}}"))
    }
}

impl fmt::Display for MoodClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Collapse the 7-point scale: 1-3 negative, 4 neutral, 5-7 positive.
pub fn map_likert(likert: Likert) -> MoodClass {
    match likert.value() {
        1..=3 => MoodClass::Negative,
        4 => MoodClass::Neutral,
        _ => MoodClass::Positive,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CaseScope {
    Nation,
    Prefecture(Prefecture),
}

impl fmt::Display for CaseScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseScope::Nation => f.write_str("nation"),
            CaseScope::Prefecture(p) => f.write_str(p.name()),
        }
    }
}

impl FromStr for CaseScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("nation") {
            Ok(CaseScope::Nation)
        } else {
            s.parse::<Prefecture>().map(CaseScope::Prefecture).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseCountRecord {
    pub date: NaiveDate,
    pub scope: CaseScope,
    pub new_cases: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Holiday {
    pub date: NaiveDate,
    pub label: String,
}
