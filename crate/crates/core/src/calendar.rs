//! Calendar helpers: month arithmetic, a simplified exchange holiday list,
//! and the weekly Friday decision schedule.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A calendar month, `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    /// 1-based.
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn add_months(self, n: i32) -> Self {
        let idx = self.year * 12 + (self.month as i32 - 1) + n;
        Self {
            year: idx.div_euclid(12),
            month: idx.rem_euclid(12) as u32 + 1,
        }
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: YearMonth) -> i32 {
        (self.year * 12 + self.month as i32) - (other.year * 12 + other.month as i32)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        YearMonth::new(year, month).ok_or_else(|| format!("month out of range in {s:?}"))
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn nth_weekday(year: i32, month: u32, weekday: Weekday, n: u8) -> Option<NaiveDate> {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, n)
}

fn last_weekday(year: i32, month: u32, weekday: Weekday) -> NaiveDate {
    let next = YearMonth::new(year, month).unwrap().add_months(1).first_day();
    let mut d = next - Duration::days(1);
    while d.weekday() != weekday {
        d -= Duration::days(1);
    }
    d
}

/// Simplified US exchange holidays: New Year's Day, Memorial Day,
/// Independence Day, Labor Day, Thanksgiving and Christmas (fixed-date
/// holidays only when they fall on a weekday).
pub fn is_holiday(date: NaiveDate) -> bool {
    let (y, m, d) = (date.year(), date.month(), date.day());
    match (m, d) {
        (1, 1) | (7, 4) | (12, 25) => return true,
        _ => {}
    }
    (m == 5 && date == last_weekday(y, 5, Weekday::Mon))
        || (m == 9 && Some(date) == nth_weekday(y, 9, Weekday::Mon, 1))
        || (m == 11 && Some(date) == nth_weekday(y, 11, Weekday::Thu, 4))
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

pub fn is_trading_day(date: NaiveDate) -> bool {
    !is_weekend(date) && !is_holiday(date)
}

/// Trading days in `[start, start + n)` trading days.
pub fn trading_days_from(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if is_trading_day(d) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Third Friday of the month: the standard AM-settled monthly expiry.
pub fn is_third_friday(date: NaiveDate) -> bool {
    Some(date) == nth_weekday(date.year(), date.month(), Weekday::Fri, 3)
}

/// Fridays in `[from, to]` whose whole Monday–Friday week is present in
/// `dates`. Weeks containing a non-trading weekday are omitted.
pub fn weekly_friday_schedule(dates: &[NaiveDate], from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let set: std::collections::HashSet<NaiveDate> = dates.iter().copied().collect();
    dates
        .iter()
        .copied()
        .filter(|d| *d >= from && *d <= to && d.weekday() == Weekday::Fri)
        .filter(|fri| (1..=4).all(|k| set.contains(&(*fri - Duration::days(k)))))
        .collect()
}
