//! UTC calendar helpers: timestamp parsing and civil-calendar bins.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

/// Parses integer epoch seconds or an ISO-8601 date/time into UTC epoch
/// seconds. Date-times without an offset are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<Timestamp> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(date_start(date));
    }
    None
}

pub fn date_of(ts: Timestamp) -> NaiveDate {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp within chrono's representable range")
        .date_naive()
}

pub fn date_start(date: NaiveDate) -> Timestamp {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
        .timestamp()
}

/// Renders a timestamp as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(ts: Timestamp) -> String {
    match DateTime::<Utc>::from_timestamp(ts, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => ts.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Week,
    #[default]
    Month,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" => Ok(Granularity::Day),
            "week" => Ok(Granularity::Week),
            "month" => Ok(Granularity::Month),
            other => Err(Error::Config(format!(
                "unknown bin granularity `{other}` (expected month, week or day)"
            ))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Day => "day",
            Granularity::Week => "week",
            Granularity::Month => "month",
        })
    }
}

impl Granularity {
    /// First date of the calendar unit containing `date`. Weeks start on Monday.
    pub fn floor(self, date: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => date,
            Granularity::Week => date - Duration::days(date.weekday().num_days_from_monday() as i64),
            Granularity::Month => date.with_day(1).expect("day 1 exists"),
        }
    }

    pub fn next(self, start: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => start + Duration::days(1),
            Granularity::Week => start + Duration::days(7),
            Granularity::Month => {
                let (y, m) = if start.month() == 12 {
                    (start.year() + 1, 1)
                } else {
                    (start.year(), start.month() + 1)
                };
                NaiveDate::from_ymd_opt(y, m, 1).expect("valid month start")
            }
        }
    }

    pub fn label(self, start: NaiveDate) -> String {
        match self {
            Granularity::Month => start.format("%Y-%m").to_string(),
            Granularity::Week | Granularity::Day => start.format("%Y-%m-%d").to_string(),
        }
    }
}

/// Half-open calendar interval `[start, end)` in epoch seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarBin {
    pub label: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl CalendarBin {
    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }
}

/// Contiguous bins covering `first..=last` at the given granularity.
pub fn bins_covering(first: Timestamp, last: Timestamp, granularity: Granularity) -> Vec<CalendarBin> {
    let mut bins = Vec::new();
    let mut start = granularity.floor(date_of(first));
    let last_date = date_of(last);
    while start <= last_date {
        let next = granularity.next(start);
        bins.push(CalendarBin {
            label: granularity.label(start),
            start: date_start(start),
            end: date_start(next),
        });
        start = next;
    }
    bins
}

/// Half-open time window used by the valuation analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        TimeWindow { start, end }
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn unbounded() -> Self {
        TimeWindow {
            start: Timestamp::MIN,
            end: Timestamp::MAX,
        }
    }
}
