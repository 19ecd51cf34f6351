//! ISO-8601 calendar weeks (`YYYY-Www`).

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeekError {
    #[error("invalid ISO week `{0}`, expected YYYY-Www")]
    Syntax(String),
    #[error("ISO year {year} has no week {week}")]
    OutOfRange { year: i32, week: u32 },
}

/// An ISO calendar week. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IsoWeek {
    year: i32,
    week: u32,
}

// 1970-01-05 is a Monday; week indices count whole weeks from it.
fn epoch_monday() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 5).expect("valid epoch")
}

impl IsoWeek {
    pub fn new(year: i32, week: u32) -> Result<Self, WeekError> {
        NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
            .map(|_| IsoWeek { year, week })
            .ok_or(WeekError::OutOfRange { year, week })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn week(self) -> u32 {
        self.week
    }

    pub fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon).expect("validated on construction")
    }

    pub fn from_date(date: NaiveDate) -> Self {
        let iso = date.iso_week();
        IsoWeek { year: iso.year(), week: iso.week() }
    }

    pub fn containing(instant: DateTime<Utc>) -> Self {
        Self::from_date(instant.date_naive())
    }

    /// Whole weeks since the epoch Monday; consecutive weeks differ by one.
    pub fn index(self) -> i64 {
        (self.monday() - epoch_monday()).num_days().div_euclid(7)
    }

    pub fn from_index(index: i64) -> Self {
        Self::from_date(epoch_monday() + Duration::weeks(index))
    }

    pub fn offset(self, weeks: i64) -> Self {
        Self::from_index(self.index() + weeks)
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    /// Signed number of weeks from `self` to `other`.
    pub fn weeks_until(self, other: IsoWeek) -> i64 {
        other.index() - self.index()
    }

    pub fn start(self) -> DateTime<Utc> {
        Utc.from_utc_datetime(&self.monday().and_hms_opt(0, 0, 0).expect("midnight"))
    }

    /// The last representable instant of the week (Sunday 23:59:59.999999999 UTC).
    pub fn end_instant(self) -> DateTime<Utc> {
        self.succ().start() - Duration::nanoseconds(1)
    }

    /// Every week from `self` to `last`, inclusive. Empty if `last < self`.
    pub fn range_inclusive(self, last: IsoWeek) -> impl Iterator<Item = IsoWeek> {
        let first = self.index();
        (first..=last.index()).map(IsoWeek::from_index)
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-W{:02}", self.year, self.week)
    }
}

impl FromStr for IsoWeek {
    type Err = WeekError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || WeekError::Syntax(s.to_string());
        let (year, week) = s.trim().split_once("-W").ok_or_else(syntax)?;
        if year.len() != 4 || week.len() != 2 {
            return Err(syntax());
        }
        let year: i32 = year.parse().map_err(|_| syntax())?;
        let week: u32 = week.parse().map_err(|_| syntax())?;
        IsoWeek::new(year, week)
    }
}

impl Serialize for IsoWeek {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IsoWeek {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> IsoWeek {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(w("2013-W34").to_string(), "2013-W34");
        assert!("2013-34".parse::<IsoWeek>().is_err());
        assert!("2013-W4".parse::<IsoWeek>().is_err());
        assert_eq!("2014-W53".parse::<IsoWeek>(), Err(WeekError::OutOfRange { year: 2014, week: 53 }));
        assert!("2015-W53".parse::<IsoWeek>().is_ok());
        assert!("2015-W00".parse::<IsoWeek>().is_err());
    }

    #[test]
    fn weekly_breakdown_range_has_45_weeks() {
        // Calendar weeks 34/2013 through 26/2014; 2013 has 52 ISO weeks.
        let weeks: Vec<_> = w("2013-W34").range_inclusive(w("2014-W26")).collect();
        assert_eq!(weeks.len(), 19 + 26);
        assert_eq!(weeks[19], w("2014-W01"));
    }

    #[test]
    fn index_round_trips_across_year_boundaries() {
        let mut week = w("2008-W50");
        for _ in 0..400 {
            let next = week.succ();
            assert_eq!(next.index(), week.index() + 1);
            assert_eq!(IsoWeek::from_index(next.index()), next);
            assert!(next > week);
            week = next;
        }
        assert_eq!(w("2013-W34").offset(12), w("2013-W46"));
        assert_eq!(w("2013-W46").offset(12), w("2014-W06"));
    }

    #[test]
    fn end_instant_is_last_nanosecond_of_sunday() {
        let end = w("2014-W01").end_instant();
        assert_eq!(end.to_rfc3339(), "2014-01-05T23:59:59.999999999+00:00");
        assert_eq!(IsoWeek::containing(end), w("2014-W01"));
        assert_eq!(IsoWeek::containing(end + Duration::nanoseconds(1)), w("2014-W02"));
    }
}
