use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    aggregate_horizontal, attribute_vertical, compute_metrics, default_periods_per_year, run_backtest,
    AttributionTable, BacktestError, BacktestResult, Frequency, Grouping, Metrics, PeriodTable,
};
use crate::data::{open_source, DataSourceConfig};
use crate::strategy::StrategyInterface;
use crate::timeseries::TradingDate;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestRequest {
    pub start: TradingDate,
    pub end: TradingDate,
    pub frequency: Frequency,
    pub grouping: Grouping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReturn {
    pub start: TradingDate,
    pub end: TradingDate,
    pub value: f64,
}

/// Stored backtest report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestReport {
    pub schema_version: u32,
    pub strategy_id: String,
    pub start: TradingDate,
    pub end: TradingDate,
    pub period_returns: Vec<PeriodReturn>,
    pub benchmark_returns: Vec<PeriodReturn>,
    pub metrics: Metrics,
    pub horizontal: PeriodTable,
    pub vertical: AttributionTable,
}

impl BacktestReport {
    pub fn from_result(
        r: &BacktestResult,
        request: &BacktestRequest,
        periods_per_year: f64,
        metadata: &[crate::data::AssetMetadata],
    ) -> Result<Self, BacktestError> {
        let dated = |values: &[f64]| {
            values
                .iter()
                .enumerate()
                .map(|(k, v)| PeriodReturn { start: r.period_start(k), end: r.period_end(k), value: *v })
                .collect()
        };
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            strategy_id: r.strategy_id.as_ref().map(ToString::to_string).unwrap_or_default(),
            start: request.start,
            end: request.end,
            period_returns: dated(&r.period_returns),
            benchmark_returns: dated(&r.benchmark_returns),
            metrics: compute_metrics(r, periods_per_year)?,
            horizontal: aggregate_horizontal(r, request.frequency)?,
            vertical: attribute_vertical(r, request.grouping, metadata)?,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serialization is infallible");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let pct = |v: f64| if v.is_finite() { format!("{:.4}%", v * 100.0) } else { "n/a".into() };
        let mut out = String::new();
        let id = if self.strategy_id.is_empty() { "-" } else { &self.strategy_id };
        let _ = writeln!(out, "strategy  {id}");
        let _ = writeln!(out, "range     {} .. {}", self.start, self.end);
        let _ = writeln!(out);
        let m = &self.metrics;
        let metrics = [
            ("cumulative_return", pct(m.cumulative_return)),
            ("annualized_return", pct(m.annualized_return)),
            ("annualized_volatility", pct(m.annualized_volatility)),
            ("sharpe", if m.sharpe.is_finite() { format!("{:.4}", m.sharpe) } else { "n/a".into() }),
            ("max_drawdown", pct(m.max_drawdown)),
        ];
        for (name, value) in metrics {
            let _ = writeln!(out, "{name:<22}{value:>14}");
        }

        let _ = writeln!(out);
        let w = self.horizontal.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let _ =
            writeln!(out, "{:<w$}  {:>12}  {:>12}  {:>12}", self.horizontal.frequency, "return", "benchmark", "excess");
        for r in &self.horizontal.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:>12}  {:>12}  {:>12}",
                r.label,
                pct(r.ret),
                pct(r.benchmark_return),
                pct(r.excess)
            );
        }

        let _ = writeln!(out);
        let w = self.vertical.rows.iter().map(|r| r.group.len()).max().unwrap_or(0).max(8);
        let _ = writeln!(out, "{:<w$}  {:>12}", self.vertical.grouping.as_str(), "contribution");
        for r in &self.vertical.rows {
            let _ = writeln!(out, "{:<w$}  {:>12}", r.group, pct(r.contribution));
        }
        out
    }
}

/// Backtest `strategy` and assemble the full report. Metrics are annualized
/// with the rebalance schedule's own frequency (see
/// [`default_periods_per_year`]).
pub fn run_report<S: StrategyInterface + ?Sized>(
    strategy: &mut S,
    config: &DataSourceConfig,
    request: &BacktestRequest,
) -> Result<BacktestReport, BacktestError> {
    let horizon = strategy.horizon_days();
    let result = run_backtest(strategy, config, request.start, request.end)?;
    let metadata = match request.grouping {
        Grouping::Asset => Vec::new(),
        _ => open_source(config)?.metadata().to_vec(),
    };
    BacktestReport::from_result(&result, request, default_periods_per_year(horizon), &metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{new_strategy, StrategyMeta, StrategySpec, StrategyType};

    fn request(grouping: Grouping) -> BacktestRequest {
        BacktestRequest {
            start: "2022-01-01".parse().unwrap(),
            end: "2022-01-07".parse().unwrap(),
            frequency: Frequency::Monthly,
            grouping,
        }
    }

    fn report(grouping: Grouping) -> BacktestReport {
        let meta = StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Allocation);
        let mut s = new_strategy(StrategySpec::equal_weight(meta)).unwrap();
        run_report(&mut s, &DataSourceConfig::f1(), &request(grouping)).unwrap()
    }

    #[test]
    fn sector_rows_on_f1() {
        let r = report(Grouping::Sector);
        let groups: Vec<&str> = r.vertical.rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(groups, ["Tech", "Energy"]);
        assert!((r.vertical.total() - 0.157625).abs() < 1e-9);
        assert_eq!(r.metrics.max_drawdown, 0.0);
        assert_eq!(r.horizontal.rows.len(), 1);
        assert_eq!(r.horizontal.rows[0].label, "2022-01");
    }

    #[test]
    fn json_shape_and_round_trip() {
        let r = report(Grouping::Country);
        let bytes = r.to_json();
        let text = std::str::from_utf8(&bytes).unwrap();
        let order = [
            "\"schema_version\"",
            "\"strategy_id\"",
            "\"start\"",
            "\"end\"",
            "\"period_returns\"",
            "\"benchmark_returns\"",
            "\"metrics\"",
            "\"horizontal\"",
            "\"vertical\"",
        ];
        let pos: Vec<usize> = order.iter().map(|k| text.find(&format!("\n  {k}")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(BacktestReport::from_json(&bytes).unwrap(), r);
        let table = r.to_table();
        assert!(table.contains("KR") && !table.contains("Tech"));
    }
}
