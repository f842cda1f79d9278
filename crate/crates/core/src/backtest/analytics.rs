use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BacktestError, BacktestResult};
use crate::data::AssetMetadata;
use crate::num::{compound, Field, Real};
use crate::timeseries::TradingDate;

/// Calendar bucketing for horizontal evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Quarterly,
    Yearly,
    /// Fixed-length buckets of `interval_days` calendar days counted from
    /// the first rebalance date.
    Custom {
        interval_days: i64,
    },
}

impl Frequency {
    pub fn custom(interval_days: i64) -> Result<Self, BacktestError> {
        if interval_days < 1 {
            return Err(BacktestError::InvalidInterval(interval_days));
        }
        Ok(Frequency::Custom { interval_days })
    }

    /// Bucket label of a period ending on `end`, for a backtest starting at `origin`.
    pub fn label(self, origin: TradingDate, end: TradingDate) -> String {
        match self {
            Frequency::Monthly => format!("{:04}-{:02}", end.year(), end.month()),
            Frequency::Quarterly => format!("{:04}-Q{}", end.year(), end.quarter()),
            Frequency::Yearly => format!("{:04}", end.year()),
            Frequency::Custom { interval_days } => {
                format!("custom[{}]", (end.days_since(origin) - 1).max(0) / interval_days)
            }
        }
    }

    pub fn periods_per_year(self) -> f64 {
        match self {
            Frequency::Monthly => 12.0,
            Frequency::Quarterly => 4.0,
            Frequency::Yearly => 1.0,
            Frequency::Custom { interval_days } => 365.25 / interval_days as f64,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Monthly => f.write_str("monthly"),
            Frequency::Quarterly => f.write_str("quarterly"),
            Frequency::Yearly => f.write_str("yearly"),
            Frequency::Custom { interval_days } => write!(f, "custom:{interval_days}"),
        }
    }
}

impl FromStr for Frequency {
    type Err = BacktestError;

    /// `monthly`, `quarterly`, `yearly`, or `custom:N`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monthly" => Ok(Frequency::Monthly),
            "quarterly" => Ok(Frequency::Quarterly),
            "yearly" => Ok(Frequency::Yearly),
            _ => match s.strip_prefix("custom:").map(str::parse::<i64>) {
                Some(Ok(n)) => Frequency::custom(n),
                _ => Err(BacktestError::UnknownOption { what: "frequency", value: s.to_string() }),
            },
        }
    }
}

/// Annualization factor of a rebalance schedule with the given horizon:
/// 252 for daily rebalancing, otherwise `365.25 / horizon_days`.
pub fn default_periods_per_year(horizon_days: u32) -> f64 {
    if horizon_days <= 1 {
        252.0
    } else {
        365.25 / f64::from(horizon_days)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow<T = f64> {
    pub label: String,
    #[serde(rename = "return")]
    pub ret: T,
    pub benchmark_return: T,
    pub excess: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTable<T = f64> {
    pub frequency: String,
    pub rows: Vec<PeriodRow<T>>,
}

/// Group periods by the bucket containing each period's end date and
/// compound within each bucket. Rows come out in chronological order.
pub fn aggregate_horizontal<T: Field>(
    r: &BacktestResult<T>,
    frequency: Frequency,
) -> Result<PeriodTable<T>, BacktestError> {
    if let Frequency::Custom { interval_days } = frequency {
        if interval_days < 1 {
            return Err(BacktestError::InvalidInterval(interval_days));
        }
    }
    if r.n_periods() == 0 {
        return Err(BacktestError::EmptyResult);
    }
    let origin = r.rebalance_dates[0];
    // (label, first period, one past the last period)
    let mut buckets: Vec<(String, usize, usize)> = Vec::new();
    for k in 0..r.n_periods() {
        let label = frequency.label(origin, r.period_end(k));
        match buckets.last_mut() {
            Some((l, _, end)) if *l == label => *end = k + 1,
            _ => buckets.push((label, k, k + 1)),
        }
    }
    let bucket_return = |returns: &[T]| match returns {
        [only] => only.clone(),
        many => compound(many),
    };
    let rows = buckets
        .into_iter()
        .map(|(label, from, to)| {
            let ret = bucket_return(&r.period_returns[from..to]);
            let benchmark_return = bucket_return(&r.benchmark_returns[from..to]);
            PeriodRow { label, excess: ret.clone() - benchmark_return.clone(), ret, benchmark_return }
        })
        .collect();
    Ok(PeriodTable { frequency: frequency.to_string(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Asset,
    Sector,
    Category,
    Country,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Asset => "asset",
            Grouping::Sector => "sector",
            Grouping::Category => "category",
            Grouping::Country => "country",
        }
    }

    fn key(self, m: &AssetMetadata) -> &str {
        match self {
            Grouping::Asset => &m.asset_id,
            Grouping::Sector => &m.sector,
            Grouping::Category => &m.category,
            Grouping::Country => &m.country,
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grouping {
    type Err = BacktestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asset" => Ok(Grouping::Asset),
            "sector" => Ok(Grouping::Sector),
            "category" => Ok(Grouping::Category),
            "country" => Ok(Grouping::Country),
            _ => Err(BacktestError::UnknownOption { what: "grouping", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRow<T = f64> {
    pub group: String,
    pub contribution: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionTable<T = f64> {
    pub grouping: Grouping,
    pub rows: Vec<AttributionRow<T>>,
}

impl<T: Field> AttributionTable<T> {
    pub fn total(&self) -> T {
        self.rows.iter().fold(T::zero(), |acc, r| acc + r.contribution.clone())
    }

    pub fn get(&self, group: &str) -> Option<&T> {
        self.rows.iter().find(|r| r.group == group).map(|r| &r.contribution)
    }
}

/// Growth-linked contributions summed per group.
///
/// Rows follow the first appearance of each group when walking held assets
/// in ascending id order. `metadata` is only consulted for non-asset
/// groupings and must cover every held asset.
pub fn attribute_vertical<T: Field>(
    r: &BacktestResult<T>,
    grouping: Grouping,
    metadata: &[AssetMetadata],
) -> Result<AttributionTable<T>, BacktestError> {
    let by_id: HashMap<&str, &AssetMetadata> = metadata.iter().map(|m| (m.asset_id.as_str(), m)).collect();
    let mut rows: Vec<AttributionRow<T>> = Vec::new();
    for (asset, c) in r.linked_contributions() {
        let group = match grouping {
            Grouping::Asset => asset.clone(),
            g => g
                .key(by_id.get(asset.as_str()).ok_or_else(|| BacktestError::MissingMetadata(asset.clone()))?)
                .to_string(),
        };
        match rows.iter_mut().find(|row| row.group == group) {
            Some(row) => row.contribution = row.contribution.clone() + c,
            None => rows.push(AttributionRow { group, contribution: c }),
        }
    }
    Ok(AttributionTable { grouping, rows })
}

/// Summary statistics. Non-finite values (an undefined Sharpe ratio) are
/// written to JSON as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T = f64> {
    pub cumulative_return: T,
    pub annualized_return: T,
    pub annualized_volatility: T,
    #[serde(with = "nan_as_null")]
    pub sharpe: f64,
    pub max_drawdown: T,
    pub periods_per_year: T,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Cumulative and annualized return, volatility (sample standard deviation,
/// `n − 1`), Sharpe with a zero risk-free rate, and maximum drawdown of the
/// wealth curve starting at 1.
///
/// With a single period, or zero dispersion, volatility is 0 and Sharpe is NaN.
pub fn compute_metrics<T: Real>(r: &BacktestResult<T>, periods_per_year: T) -> Result<Metrics<T>, BacktestError> {
    let n = r.n_periods();
    if n == 0 {
        return Err(BacktestError::EmptyResult);
    }
    if !(periods_per_year.is_finite() && periods_per_year > T::zero()) {
        return Err(BacktestError::InvalidPeriodsPerYear(periods_per_year.to_f64().unwrap_or(f64::NAN)));
    }
    let count = T::of(n as f64);
    let cumulative = r.cumulative_return();
    let annualized_return = (T::one() + cumulative).powf(periods_per_year / count) - T::one();
    let mean = r.period_returns.iter().fold(T::zero(), |a, x| a + *x) / count;
    let sd = if n < 2 {
        T::zero()
    } else {
        let ss = r.period_returns.iter().fold(T::zero(), |a, x| a + (*x - mean) * (*x - mean));
        (ss / (count - T::one())).sqrt()
    };
    let root = periods_per_year.sqrt();
    let sharpe = if sd > T::zero() { (mean / sd * root).to_f64().unwrap_or(f64::NAN) } else { f64::NAN };
    let mut peak = T::one();
    let mut wealth = T::one();
    let mut max_drawdown = T::zero();
    for ret in &r.period_returns {
        wealth = wealth * (T::one() + *ret);
        peak = peak.max(wealth);
        max_drawdown = max_drawdown.max((peak - wealth) / peak);
    }
    Ok(Metrics {
        cumulative_return: cumulative,
        annualized_return,
        annualized_volatility: sd * root,
        sharpe,
        max_drawdown,
        periods_per_year,
    })
}
