//! Calendar month arithmetic shared by the panel-based modules.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid month `{0}`, expected YYYY-MM")]
pub struct MonthParseError(pub String);

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of_date(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0, used for dense indexing.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn succ(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    pub fn pred(self) -> Self {
        Self::from_ordinal(self.ordinal() - 1)
    }

    pub fn plus(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn quarter(self) -> u32 {
        (self.month - 1) / 3 + 1
    }

    pub fn is_quarter_end(self) -> bool {
        self.month % 3 == 0
    }

    pub fn last_day(self) -> NaiveDate {
        let next = self.succ();
        NaiveDate::from_ymd_opt(next.year, next.month, 1)
            .and_then(|d| d.pred_opt())
            .expect("valid month")
    }

    /// Inclusive range of months.
    pub fn range_inclusive(start: Month, end: Month) -> impl Iterator<Item = Month> {
        (start.ordinal()..=end.ordinal()).map(Month::from_ordinal)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = MonthParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MonthParseError(s.to_string());
        let t = s.trim();
        // Accept YYYY-MM as well as the compact YYYYMM used by factor files.
        let (y, m) = match t.split_once('-') {
            Some((y, m)) => (y, m),
            None if t.len() == 6 => t.split_at(4),
            None => return Err(bad()),
        };
        let year = y.parse::<i32>().map_err(|_| bad())?;
        let month = m.parse::<u32>().map_err(|_| bad())?;
        Month::new(year, month).ok_or_else(bad)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let m: Month = "2021-06".parse().unwrap();
        assert_eq!(m.to_string(), "2021-06");
        assert_eq!("202106".parse::<Month>().unwrap(), m);
        assert!("2021-13".parse::<Month>().is_err());
        assert!("june".parse::<Month>().is_err());
    }

    #[test]
    fn ordinal_round_trip() {
        let m = Month::new(2009, 12).unwrap();
        assert_eq!(m.succ(), Month::new(2010, 1).unwrap());
        assert_eq!(m.succ().pred(), m);
        assert_eq!(Month::from_ordinal(m.ordinal()), m);
        assert_eq!(m.last_day(), NaiveDate::from_ymd_opt(2009, 12, 31).unwrap());
        assert_eq!(Month::new(2024, 2).unwrap().last_day().day(), 29);
    }
}
