//! Small value types shared across modules.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("invalid zip {0:?}: expected exactly five ASCII digits")]
    InvalidZip(String),
    #[error("invalid time window: start {start} is after end {end}")]
    InvertedWindow { start: String, end: String },
    #[error("invalid timestamp {0:?}")]
    InvalidTimestamp(String),
}

/// A five-digit US ZIP code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Zip(String);

impl Zip {
    pub fn new(s: &str) -> Result<Self, TypeError> {
        let s = s.trim();
        if s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Zip(s.to_owned()))
        } else {
            Err(TypeError::InvalidZip(s.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Zip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Zip {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Zip::new(s)
    }
}

impl Serialize for Zip {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Zip {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Zip::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Closed UTC interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, TypeError> {
        if start > end {
            return Err(TypeError::InvertedWindow {
                start: start.to_rfc3339(),
                end: end.to_rfc3339(),
            });
        }
        Ok(TimeWindow { start, end })
    }

    /// Whole days: `start` 00:00:00 through `end` 23:59:59 UTC.
    pub fn from_dates(start: NaiveDate, end: NaiveDate) -> Result<Self, TypeError> {
        let last = NaiveTime::from_hms_opt(23, 59, 59).expect("valid time");
        TimeWindow::new(
            Utc.from_utc_datetime(&start.and_time(NaiveTime::MIN)),
            Utc.from_utc_datetime(&end.and_time(last)),
        )
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start.date_naive()
    }

    pub fn end_date(&self) -> NaiveDate {
        self.end.date_naive()
    }

    /// Zero when `t` is inside the window, else the gap to the nearest edge.
    pub fn distance_to(&self, t: DateTime<Utc>) -> chrono::Duration {
        if t < self.start {
            self.start - t
        } else if t > self.end {
            t - self.end
        } else {
            chrono::Duration::zero()
        }
    }
}

/// Parses RFC 3339, naive `YYYY-MM-DD[T ]HH:MM:SS` (taken as UTC) or a bare date.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, TypeError> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Utc.from_utc_datetime(&t));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(Utc.from_utc_datetime(&d.and_time(NaiveTime::MIN)));
    }
    Err(TypeError::InvalidTimestamp(s.to_owned()))
}
