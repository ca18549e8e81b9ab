//! Calendar months, month ranges and fixed-frequency time series.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A calendar month.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    index: i32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidSpan(format!("month {month} out of 1..=12")));
        }
        Ok(Month {
            index: year * 12 + month as i32 - 1,
        })
    }

    pub fn year(self) -> i32 {
        self.index.div_euclid(12)
    }

    /// Month of year, 1..=12.
    pub fn month(self) -> u32 {
        self.index.rem_euclid(12) as u32 + 1
    }

    pub fn quarter(self) -> u32 {
        (self.month() - 1) / 3 + 1
    }

    pub fn is_quarter_start(self) -> bool {
        matches!(self.month(), 1 | 4 | 7 | 10)
    }

    pub fn offset(self, months: i32) -> Month {
        Month {
            index: self.index + months,
        }
    }

    pub fn succ(self) -> Month {
        self.offset(1)
    }

    pub fn pred(self) -> Month {
        self.offset(-1)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: Month) -> i32 {
        self.index - other.index
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl fmt::Debug for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Month {
    type Err = Error;

    /// Accepts `YYYY-MM` and the `YYYYmM` / `YYYYmMM` notation.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpan(format!("malformed month '{s}'"));
        let (y, m) = if let Some((y, m)) = s.split_once('-') {
            if m.len() != 2 {
                return Err(bad());
            }
            (y, m)
        } else if let Some((y, m)) = s.split_once('m') {
            if m.is_empty() || m.len() > 2 {
                return Err(bad());
            }
            (y, m)
        } else {
            return Err(bad());
        };
        if y.len() != 4 || !y.bytes().all(|b| b.is_ascii_digit()) || !m.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive range of months.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonthRange {
    pub start: Month,
    pub end: Month,
}

impl MonthRange {
    pub fn new(start: Month, end: Month) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidSpan(format!("{start}..{end} is empty")));
        }
        Ok(MonthRange { start, end })
    }

    /// Range of `len` months starting at `start`; `len` must be positive.
    pub fn with_len(start: Month, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidSpan("zero-length range".into()));
        }
        MonthRange::new(start, start.offset(len as i32 - 1))
    }

    pub fn len(&self) -> usize {
        (self.end.months_since(self.start) + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: Month) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn contains_range(&self, other: &MonthRange) -> bool {
        self.contains(other.start) && self.contains(other.end)
    }

    pub fn intersect(&self, other: &MonthRange) -> Option<MonthRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(MonthRange { start, end })
    }

    /// Position of `m` within the range.
    pub fn index_of(&self, m: Month) -> Option<usize> {
        self.contains(m).then(|| m.months_since(self.start) as usize)
    }

    pub fn months(&self) -> impl Iterator<Item = Month> {
        let start = self.start;
        (0..self.len()).map(move |i| start.offset(i as i32))
    }
}

impl fmt::Display for MonthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl fmt::Debug for MonthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MonthRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::InvalidSpan(format!("expected START..END, got '{s}'")))?;
        MonthRange::new(a.parse()?, b.parse()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
}

impl Frequency {
    pub fn months_per_period(self) -> usize {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
        }
    }
}

/// Dated, fixed-frequency sequence of real values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TimeSeries<T: Real> {
    pub start: Month,
    pub frequency: Frequency,
    pub values: Vec<T>,
}

impl<T: Real> TimeSeries<T> {
    pub fn monthly(start: Month, values: Vec<T>) -> Self {
        TimeSeries {
            start,
            frequency: Frequency::Monthly,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First month of period `i`.
    pub fn period_start(&self, i: usize) -> Month {
        self.start
            .offset((i * self.frequency.months_per_period()) as i32)
    }

    /// Months covered, or `None` for an empty series.
    pub fn span(&self) -> Option<MonthRange> {
        if self.values.is_empty() {
            return None;
        }
        let months = self.values.len() * self.frequency.months_per_period();
        MonthRange::with_len(self.start, months).ok()
    }

    /// Label of period `i`: `YYYY-MM` or `YYYY-Qn`.
    pub fn label(&self, i: usize) -> String {
        let m = self.period_start(i);
        match self.frequency {
            Frequency::Monthly => m.to_string(),
            Frequency::Quarterly => format!("{:04}-Q{}", m.year(), m.quarter()),
        }
    }

    /// Value at a month, for monthly series.
    pub fn get(&self, m: Month) -> Option<T> {
        if self.frequency != Frequency::Monthly {
            return None;
        }
        let i = m.months_since(self.start);
        (i >= 0).then(|| self.values.get(i as usize).copied()).flatten()
    }

    /// Monthly sub-series restricted to `range`; the range must lie within the span.
    pub fn slice(&self, range: &MonthRange) -> Result<TimeSeries<T>> {
        let span = self
            .span()
            .ok_or_else(|| Error::Length("empty series".into()))?;
        if self.frequency != Frequency::Monthly || !span.contains_range(range) {
            return Err(Error::InvalidSpan(format!(
                "{range} not within series span {span}"
            )));
        }
        let a = range.start.months_since(self.start) as usize;
        Ok(TimeSeries::monthly(
            range.start,
            self.values[a..a + range.len()].to_vec(),
        ))
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> TimeSeries<T> {
        TimeSeries {
            start: self.start,
            frequency: self.frequency,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}
