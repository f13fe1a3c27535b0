//! Epidemiological-week calendar.
//!
//! Weeks run Sunday through Saturday. Week 1 of a year is the Sunday-start
//! week holding at least four days of January, equivalently the week whose
//! Wednesday falls in January, equivalently the week containing 4 January.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// 1970-01-04 was a Sunday; week indices count whole weeks from it.
fn reference_sunday() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 4).expect("valid reference date")
}

fn sunday_on_or_before(d: NaiveDate) -> NaiveDate {
    let back = d.weekday().num_days_from_sunday() as i64;
    d - Duration::days(back)
}

fn week_one_start(year: i32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt(year, 1, 4).map(sunday_on_or_before)
}

/// An epidemiological week `(year, week)`.
///
/// Ordering is lexicographic on `(year, week)`, which agrees with calendar time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpiWeek {
    year: i32,
    week: u32,
}

impl EpiWeek {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        let max = Self::weeks_in_year(year)
            .ok_or_else(|| Error::Input(format!("year {year} out of supported range")))?;
        if week == 0 || week > max {
            return Err(Error::Input(format!(
                "week {week} out of range for epidemiological year {year} (1..={max})"
            )));
        }
        Ok(Self { year, week })
    }

    /// The week containing `date`.
    pub fn from_date(date: NaiveDate) -> Self {
        let start = sunday_on_or_before(date);
        let wednesday = start + Duration::days(3);
        let year = wednesday.year();
        let first = week_one_start(year).expect("year derived from a valid date");
        let week = ((start - first).num_days() / 7 + 1) as u32;
        Self { year, week }
    }

    /// Number of epidemiological weeks in `year` (52 or 53).
    pub fn weeks_in_year(year: i32) -> Option<u32> {
        let this = week_one_start(year)?;
        let next = week_one_start(year.checked_add(1)?)?;
        Some(((next - this).num_days() / 7) as u32)
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn week(&self) -> u32 {
        self.week
    }

    /// The Sunday on which this week starts.
    pub fn start_date(&self) -> NaiveDate {
        week_one_start(self.year).expect("validated year") + Duration::weeks(self.week as i64 - 1)
    }

    /// The Saturday on which this week ends.
    pub fn end_date(&self) -> NaiveDate {
        self.start_date() + Duration::days(6)
    }

    /// Absolute week number on a continuous scale; consecutive weeks differ by one.
    pub fn index(&self) -> i64 {
        (self.start_date() - reference_sunday()).num_days() / 7
    }

    pub fn from_index(index: i64) -> Self {
        Self::from_date(reference_sunday() + Duration::weeks(index))
    }

    /// The week `n` weeks later (earlier for negative `n`).
    pub fn offset(&self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    pub fn succ(&self) -> Self {
        self.offset(1)
    }

    /// Signed number of weeks from `earlier` to `self`.
    pub fn weeks_since(&self, earlier: EpiWeek) -> i64 {
        self.index() - earlier.index()
    }

    /// Inclusive iterator from `self` to `last`.
    pub fn through(self, last: EpiWeek) -> impl Iterator<Item = EpiWeek> {
        (self.index()..=last.index()).map(EpiWeek::from_index)
    }
}

impl fmt::Display for EpiWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

impl FromStr for EpiWeek {
    type Err = Error;

    /// Accepts `YYYY-Www`, `YYYY-ww` and `YYYYWww`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("invalid epidemiological week '{s}', expected YYYY-Www"));
        let s = s.trim();
        let (y, w) = if let Some((y, w)) = s.split_once('-') {
            (y, w.trim_start_matches(['W', 'w']))
        } else if let Some(pos) = s.find(['W', 'w']) {
            (&s[..pos], &s[pos + 1..])
        } else {
            return Err(bad());
        };
        let year: i32 = y.parse().map_err(|_| bad())?;
        let week: u32 = w.parse().map_err(|_| bad())?;
        EpiWeek::new(year, week)
    }
}

impl Serialize for EpiWeek {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EpiWeek {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse an ISO-8601 `YYYY-MM-DD` date.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Input(format!("invalid date '{}': {e}", s.trim())))
}

/// Week containing the given ISO date string.
pub fn to_epi_week(date: &str) -> Result<EpiWeek> {
    parse_date(date).map(EpiWeek::from_date)
}

#[cfg(test)]
fn is_sunday(d: NaiveDate) -> bool {
    d.weekday() == chrono::Weekday::Sun
}
