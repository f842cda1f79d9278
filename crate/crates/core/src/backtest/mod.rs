//! Interface-driven backtesting.
//!
//! The engine talks to a strategy only through [`StrategyInterface`]: the
//! metadata getters, `set_configs`, `reset` and `execute`. Prices for the
//! universe and the benchmark are queried from the data source directly.
//!
//! Within a period `(d_k, d_{k+1}]` weights are fixed at the close of `d_k`
//! and held to `d_{k+1}`, so per-period contributions add up exactly to the
//! period return.

mod analytics;
mod report;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::data::{open_source, DataError, DataSourceConfig};
use crate::ids::StrategyId;
use crate::num::Field;
use crate::strategy::{StrategyError, StrategyInterface, StrategyType};
use crate::timeseries::{TimeSeriesDataset, TradingDate};

pub use analytics::{
    aggregate_horizontal, attribute_vertical, compute_metrics, default_periods_per_year, AttributionRow,
    AttributionTable, Frequency, Grouping, Metrics, PeriodRow, PeriodTable,
};
pub use report::{run_report, BacktestReport, BacktestRequest, PeriodReturn, REPORT_SCHEMA_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid interval: interval_days must be at least 1, got {0}")]
    InvalidInterval(i64),
    #[error("no metadata for asset `{0}`")]
    MissingMetadata(String),
    #[error("backtest result has no periods")]
    EmptyResult,
    #[error("periods_per_year must be positive, got {0}")]
    InvalidPeriodsPerYear(f64),
    #[error("only allocation strategies can be backtested, got a {0:?} strategy")]
    NotAllocation(StrategyType),
    #[error("inconsistent backtest result: {0}")]
    Inconsistent(String),
    #[error("unknown {what} `{value}`")]
    UnknownOption { what: &'static str, value: String },
}

/// Replayed performance of one strategy over a date range.
///
/// Period `k` runs from `rebalance_dates[k]` (exclusive) to
/// `rebalance_dates[k + 1]` (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult<T = f64> {
    pub strategy_id: Option<StrategyId>,
    pub rebalance_dates: Vec<TradingDate>,
    pub period_returns: Vec<T>,
    pub benchmark_returns: Vec<T>,
    pub holdings: Vec<BTreeMap<String, T>>,
    pub asset_period_returns: Vec<BTreeMap<String, T>>,
}

/// `next / prev − 1`.
pub fn simple_return<T: Field>(prev: T, next: T) -> T {
    next / prev - T::one()
}

impl<T: Field> BacktestResult<T> {
    /// Assemble a result, deriving `R_k = Σ_i w_{i,k}·r_{i,k}` over held assets.
    pub fn from_periods(
        strategy_id: Option<StrategyId>,
        rebalance_dates: Vec<TradingDate>,
        holdings: Vec<BTreeMap<String, T>>,
        asset_period_returns: Vec<BTreeMap<String, T>>,
        benchmark_returns: Vec<T>,
    ) -> Result<Self, BacktestError> {
        let n = holdings.len();
        if rebalance_dates.len() != n + 1 || asset_period_returns.len() != n || benchmark_returns.len() != n {
            return Err(BacktestError::Inconsistent(format!(
                "{} dates, {} holdings, {} asset-return rows, {} benchmark returns",
                rebalance_dates.len(),
                n,
                asset_period_returns.len(),
                benchmark_returns.len()
            )));
        }
        if rebalance_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BacktestError::Inconsistent("rebalance dates must increase strictly".into()));
        }
        let period_returns = holdings
            .iter()
            .zip(&asset_period_returns)
            .map(|(w, r)| {
                w.iter().try_fold(T::zero(), |acc, (asset, weight)| {
                    let ret = r
                        .get(asset)
                        .ok_or_else(|| BacktestError::Inconsistent(format!("no return for held asset {asset}")))?;
                    Ok(acc + weight.clone() * ret.clone())
                })
            })
            .collect::<Result<_, BacktestError>>()?;
        Ok(Self { strategy_id, rebalance_dates, period_returns, benchmark_returns, holdings, asset_period_returns })
    }

    pub fn n_periods(&self) -> usize {
        self.period_returns.len()
    }

    pub fn period_start(&self, k: usize) -> TradingDate {
        self.rebalance_dates[k]
    }

    pub fn period_end(&self, k: usize) -> TradingDate {
        self.rebalance_dates[k + 1]
    }

    /// `c_{i,k} = w_{i,k}·r_{i,k}` for every held asset in period `k`.
    pub fn contributions(&self, k: usize) -> BTreeMap<String, T> {
        self.holdings[k].iter().map(|(a, w)| (a.clone(), w.clone() * self.asset_period_returns[k][a].clone())).collect()
    }

    /// `Π(1 + R_k) − 1`.
    pub fn cumulative_return(&self) -> T {
        crate::num::compound(&self.period_returns)
    }

    /// `Σ_k c_{i,k}·Π_{j<k}(1 + R_j)` per asset.
    pub fn linked_contributions(&self) -> BTreeMap<String, T> {
        let mut linked: BTreeMap<String, T> = BTreeMap::new();
        let mut growth = T::one();
        for k in 0..self.n_periods() {
            for (asset, c) in self.contributions(k) {
                let slot = linked.entry(asset).or_insert_with(T::zero);
                *slot = slot.clone() + c * growth.clone();
            }
            growth = growth * (T::one() + self.period_returns[k].clone());
        }
        linked
    }
}

/// First valid date, then repeatedly the first valid date at least
/// `horizon_days` calendar days after the previous pick.
pub fn rebalance_schedule(valid_dates: &[TradingDate], horizon_days: u32) -> Vec<TradingDate> {
    let mut out: Vec<TradingDate> = Vec::new();
    for &d in valid_dates {
        match out.last() {
            Some(prev) if d < prev.add_days(i64::from(horizon_days.max(1))) => {}
            _ => out.push(d),
        }
    }
    out
}

fn close_on(ds: &TimeSeriesDataset, date: TradingDate, col: usize) -> Result<f64, BacktestError> {
    let v = ds
        .row_position(date)
        .map(|t| ds.row(t)[col])
        .filter(|v| v.is_finite() && *v > 0.0)
        .ok_or_else(|| BacktestError::InsufficientData(format!("no price for {} on {date}", ds.columns()[col])))?;
    Ok(v)
}

/// Replay `strategy` over `[start, end]`.
///
/// Calls, in order: the getters, `set_configs(config)`, `reset(start, end)`,
/// then `execute(d_k)` for each rebalance date except the last.
pub fn run_backtest<S: StrategyInterface + ?Sized>(
    strategy: &mut S,
    config: &DataSourceConfig,
    start: TradingDate,
    end: TradingDate,
) -> Result<BacktestResult, BacktestError> {
    let strategy_id = strategy.strategy_id().cloned();
    let universe = strategy.universe().to_vec();
    let benchmark = strategy.benchmark().to_string();
    let horizon = strategy.horizon_days();
    let kind = strategy.strategy_type();
    if kind != StrategyType::Allocation {
        return Err(BacktestError::NotAllocation(kind));
    }

    strategy.set_configs(config.clone());
    let valid = strategy.reset(start, end)?;
    let schedule = rebalance_schedule(&valid, horizon);
    if schedule.len() < 2 {
        return Err(BacktestError::InsufficientData(format!(
            "need at least 2 rebalance dates in [{start}, {end}], found {}",
            schedule.len()
        )));
    }
    let (first, last) = (schedule[0], schedule[schedule.len() - 1]);
    let source = open_source(config)?;
    let prices = source.load_prices(&universe, first, last)?;
    let bench = source.load_prices(std::slice::from_ref(&benchmark), first, last)?;

    let n = schedule.len() - 1;
    let mut holdings = Vec::with_capacity(n);
    let mut asset_returns = Vec::with_capacity(n);
    let mut benchmark_returns = Vec::with_capacity(n);
    for k in 0..n {
        let (from, to) = (schedule[k], schedule[k + 1]);
        let outcome = strategy.execute(from)?;
        let portfolio =
            outcome.content.as_portfolio().ok_or(BacktestError::NotAllocation(outcome.content.strategy_type()))?;
        holdings.push(portfolio.weights().clone());
        asset_returns.push(
            universe
                .iter()
                .enumerate()
                .map(|(c, a)| Ok((a.clone(), simple_return(close_on(&prices, from, c)?, close_on(&prices, to, c)?))))
                .collect::<Result<BTreeMap<_, _>, BacktestError>>()?,
        );
        benchmark_returns.push(simple_return(close_on(&bench, from, 0)?, close_on(&bench, to, 0)?));
    }
    BacktestResult::from_periods(strategy_id, schedule, holdings, asset_returns, benchmark_returns)
}
