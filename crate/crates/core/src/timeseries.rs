//! Date-indexed datasets and their calendar operations.
//!
//! A [`TimeSeriesDataset`] is the unit exchanged between data pipelines and
//! algorithms. It is immutable once built; every operation returns a new
//! dataset. Missing cells hold NaN (see [`TimeSeriesDataset::missing`]).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeSeriesError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index not strictly increasing at row {row} ({date})")]
    Order { row: usize, date: TradingDate },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column names must be non-empty")]
    EmptyColumnName,
    #[error("invalid range: start {start} is after end {end}")]
    Range { start: TradingDate, end: TradingDate },
    #[error("invalid date `{0}`: expected yyyy-mm-dd")]
    DateFormat(String),
}

/// A calendar date with no time-of-day component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TradingDate(NaiveDate);

impl TradingDate {
    /// Earliest representable date; used as an open lower bound.
    pub const MIN: TradingDate = TradingDate(NaiveDate::MIN);
    pub const MAX: TradingDate = TradingDate(NaiveDate::MAX);

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(Self)
    }

    pub fn parse(s: &str) -> Result<Self, TimeSeriesError> {
        // chrono accepts some non-padded forms; the wire format is strictly 10 chars.
        if s.len() != 10 {
            return Err(TimeSeriesError::DateFormat(s.to_string()));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map(Self).map_err(|_| TimeSeriesError::DateFormat(s.to_string()))
    }

    pub fn naive(self) -> NaiveDate {
        self.0
    }

    pub fn year(self) -> i32 {
        self.0.year()
    }

    pub fn month(self) -> u32 {
        self.0.month()
    }

    pub fn quarter(self) -> u32 {
        (self.0.month() - 1) / 3 + 1
    }

    /// Shift by a signed number of calendar days, saturating at the
    /// representable range.
    pub fn add_days(self, days: i64) -> Self {
        match self.0.checked_add_signed(Duration::days(days)) {
            Some(d) => Self(d),
            None if days < 0 => Self::MIN,
            None => Self::MAX,
        }
    }

    /// Calendar days from `earlier` to `self` (negative if `self` is earlier).
    pub fn days_since(self, earlier: TradingDate) -> i64 {
        (self.0 - earlier.0).num_days()
    }
}

impl From<NaiveDate> for TradingDate {
    fn from(d: NaiveDate) -> Self {
        Self(d)
    }
}

impl fmt::Display for TradingDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

impl FromStr for TradingDate {
    type Err = TimeSeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for TradingDate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TradingDate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Date-indexed, row-major matrix of reals.
///
/// Invariants (checked by [`TimeSeriesDataset::new`]): the index is strictly
/// increasing, column names are unique and non-empty, and every row has one
/// value per column.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset<T: Real = f64> {
    index: Vec<TradingDate>,
    columns: Vec<String>,
    values: Vec<T>,
}

impl<T: Real> TimeSeriesDataset<T> {
    pub fn new(index: Vec<TradingDate>, columns: Vec<String>, values: Vec<Vec<T>>) -> Result<Self, TimeSeriesError> {
        if values.len() != index.len() {
            return Err(TimeSeriesError::Shape(format!(
                "{} rows of values for an index of length {}",
                values.len(),
                index.len()
            )));
        }
        if let Some((i, row)) = values.iter().enumerate().find(|(_, row)| row.len() != columns.len()) {
            return Err(TimeSeriesError::Shape(format!(
                "row {i} has {} values, expected {}",
                row.len(),
                columns.len()
            )));
        }
        validate_columns(&columns)?;
        if let Some(row) = (1..index.len()).find(|&i| index[i] <= index[i - 1]) {
            return Err(TimeSeriesError::Order { row, date: index[row] });
        }
        Ok(Self { index, columns, values: values.into_iter().flatten().collect() })
    }

    /// Zero-row dataset with the given columns.
    pub fn empty(columns: Vec<String>) -> Result<Self, TimeSeriesError> {
        Self::new(Vec::new(), columns, Vec::new())
    }

    /// Sentinel stored in cells with no observation.
    pub fn missing() -> T {
        T::nan()
    }

    pub fn is_missing(v: T) -> bool {
        v.is_nan()
    }

    pub fn index(&self) -> &[TradingDate] {
        &self.index
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.index.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn first_date(&self) -> Option<TradingDate> {
        self.index.first().copied()
    }

    pub fn last_date(&self) -> Option<TradingDate> {
        self.index.last().copied()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = self.columns.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = (TradingDate, &[T])> + '_ {
        self.index.iter().enumerate().map(|(i, d)| (*d, self.row(i)))
    }

    pub fn column_position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let j = self.column_position(name)?;
        Some((0..self.n_rows()).map(|i| self.row(i)[j]).collect())
    }

    pub fn row_position(&self, date: TradingDate) -> Option<usize> {
        self.index.binary_search(&date).ok()
    }

    pub fn get(&self, date: TradingDate, column: &str) -> Option<T> {
        let i = self.row_position(date)?;
        let j = self.column_position(column)?;
        Some(self.row(i)[j])
    }

    fn select_rows(&self, keep: impl Fn(TradingDate) -> bool) -> Self {
        let mut index = Vec::new();
        let mut values = Vec::new();
        for (d, row) in self.rows() {
            if keep(d) {
                index.push(d);
                values.extend_from_slice(row);
            }
        }
        Self { index, columns: self.columns.clone(), values }
    }

    /// Rows strictly before `cutoff`, then rows on or after it.
    pub fn split_by_date(&self, cutoff: TradingDate) -> (Self, Self) {
        (self.select_rows(|d| d < cutoff), self.select_rows(|d| d >= cutoff))
    }

    /// Rows with `start <= date <= end`.
    pub fn slice_range(&self, start: TradingDate, end: TradingDate) -> Result<Self, TimeSeriesError> {
        if start > end {
            return Err(TimeSeriesError::Range { start, end });
        }
        Ok(self.select_rows(|d| start <= d && d <= end))
    }

    /// Rows on or before `date`.
    pub fn up_to(&self, date: TradingDate) -> Self {
        self.select_rows(|d| d <= date)
    }

    /// Restrict both datasets to the dates they share.
    pub fn align(&self, other: &Self) -> (Self, Self) {
        let ours: HashSet<TradingDate> = self.index.iter().copied().collect();
        let theirs: HashSet<TradingDate> = other.index.iter().copied().collect();
        (self.select_rows(|d| theirs.contains(&d)), other.select_rows(|d| ours.contains(&d)))
    }

    /// Row-wise concatenation; `other` must have the same columns and start
    /// strictly after `self` ends.
    pub fn concat_rows(&self, other: &Self) -> Result<Self, TimeSeriesError> {
        if self.columns != other.columns {
            return Err(TimeSeriesError::Shape("cannot concatenate datasets with different columns".into()));
        }
        if let (Some(last), Some(first)) = (self.last_date(), other.first_date()) {
            if first <= last {
                return Err(TimeSeriesError::Order { row: self.n_rows(), date: first });
            }
        }
        let mut out = self.clone();
        out.index.extend_from_slice(&other.index);
        out.values.extend_from_slice(&other.values);
        Ok(out)
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Option<Self> {
        let positions: Vec<usize> = names.iter().map(|n| self.column_position(n)).collect::<Option<_>>()?;
        let mut values = Vec::with_capacity(self.n_rows() * positions.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(positions.iter().map(|&j| row[j]));
        }
        let columns: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        validate_columns(&columns).ok()?;
        Some(Self { index: self.index.clone(), columns, values })
    }
}

fn validate_columns(columns: &[String]) -> Result<(), TimeSeriesError> {
    let mut seen = HashSet::new();
    for c in columns {
        if c.is_empty() {
            return Err(TimeSeriesError::EmptyColumnName);
        }
        if !seen.insert(c.as_str()) {
            return Err(TimeSeriesError::DuplicateColumn(c.clone()));
        }
    }
    Ok(())
}

/// Free-function form of [`TimeSeriesDataset::split_by_date`].
pub fn split_by_date<T: Real>(
    ds: &TimeSeriesDataset<T>,
    cutoff: TradingDate,
) -> (TimeSeriesDataset<T>, TimeSeriesDataset<T>) {
    ds.split_by_date(cutoff)
}

/// Free-function form of [`TimeSeriesDataset::align`].
pub fn align<T: Real>(
    a: &TimeSeriesDataset<T>,
    b: &TimeSeriesDataset<T>,
) -> (TimeSeriesDataset<T>, TimeSeriesDataset<T>) {
    a.align(b)
}
