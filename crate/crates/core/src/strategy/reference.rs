//! Built-in strategy kinds.

use std::collections::BTreeMap;

use super::{
    ExecutionContext, OutcomeContent, Portfolio, Rank, Signal, StrategyError, StrategyLevel, StrategyLogic,
    StrategySpec, StrategyType,
};
use crate::algorithm::{predict, Algorithm, LinearRegression};
use crate::data::DataPipelineSpec;
use crate::params::Params;
use crate::timeseries::TimeSeriesDataset;

const TRAILING_RETURN: &str = "trailing_return";

fn trailing_return_spec(lookback_days: u32) -> DataPipelineSpec {
    DataPipelineSpec::new(TRAILING_RETURN, Params::new().with("lookback_days", lookback_days))
}

/// The pipeline reading trailing returns must use the strategy's own lookback.
fn check_trailing_pipeline(spec: &StrategySpec) -> Result<(), StrategyError> {
    if spec.lookback_days == 0 {
        return Err(StrategyError::InvalidParams("lookback_days must be at least 1".into()));
    }
    let p = spec
        .pipelines
        .first()
        .filter(|p| p.pipeline_kind == TRAILING_RETURN)
        .ok_or_else(|| StrategyError::InvalidParams(format!("first pipeline must be `{TRAILING_RETURN}`")))?;
    let lag = p.params.non_negative("lookback_days")?;
    if lag != u64::from(spec.lookback_days) {
        return Err(StrategyError::InvalidParams(format!(
            "pipeline lookback {lag} differs from strategy lookback {}",
            spec.lookback_days
        )));
    }
    Ok(())
}

/// The row of `ds` dated `as_of`, as (asset, value) pairs.
fn row_at(ds: &TimeSeriesDataset, ctx: &ExecutionContext<'_>) -> Result<Vec<(String, f64)>, StrategyError> {
    let t = ds
        .row_position(ctx.as_of)
        .ok_or_else(|| StrategyError::InsufficientData(format!("no data row for {}", ctx.as_of)))?;
    let row = ds.row(t);
    ctx.universe
        .iter()
        .map(|a| {
            let v = ds
                .column_position(a)
                .map(|c| row[c])
                .ok_or_else(|| StrategyError::InsufficientData(format!("no column for {a}")))?;
            if v.is_finite() {
                Ok((a.clone(), v))
            } else {
                Err(StrategyError::InsufficientData(format!("{a} has no value on {}", ctx.as_of)))
            }
        })
        .collect()
}

fn first_dataset<'a>(ctx: &'a ExecutionContext<'_>) -> Result<&'a TimeSeriesDataset, StrategyError> {
    ctx.datasets.first().ok_or_else(|| StrategyError::InsufficientData("strategy has no pipeline data".into()))
}

/// Equal weight across the whole universe on every date.
pub struct EqualWeight;

impl EqualWeight {
    pub const KIND: &'static str = "equal_weight";
}

impl StrategyLogic for EqualWeight {
    fn level(&self) -> StrategyLevel {
        StrategyLevel::DataPipeline
    }

    fn strategy_type(&self) -> StrategyType {
        StrategyType::Allocation
    }

    fn default_pipelines(&self, _: u32, _: &Params) -> Vec<DataPipelineSpec> {
        vec![DataPipelineSpec::new("close_prices", Params::new())]
    }

    fn compute(&self, ctx: &ExecutionContext<'_>) -> Result<OutcomeContent, StrategyError> {
        // Only trade when every asset actually has a price on the date.
        row_at(first_dataset(ctx)?, ctx)?;
        Ok(OutcomeContent::Portfolio(Portfolio::equal(ctx.universe)?))
    }
}

/// Equal weight across the `top_k` assets with the highest trailing return.
///
/// Ties are broken by ascending asset id. `top_k` defaults to 1.
pub struct MomentumTopK;

impl MomentumTopK {
    pub const KIND: &'static str = "momentum_topk";

    fn top_k(params: &Params) -> Result<usize, StrategyError> {
        Ok(params.non_negative_or("top_k", 1)? as usize)
    }
}

impl StrategyLogic for MomentumTopK {
    fn level(&self) -> StrategyLevel {
        StrategyLevel::DataPipeline
    }

    fn strategy_type(&self) -> StrategyType {
        StrategyType::Allocation
    }

    fn validate(&self, spec: &StrategySpec) -> Result<(), StrategyError> {
        check_trailing_pipeline(spec)?;
        let k = Self::top_k(&spec.params)?;
        if k == 0 || k > spec.meta.universe.len() {
            return Err(StrategyError::InvalidParams(format!(
                "top_k must be between 1 and the universe size {}, got {k}",
                spec.meta.universe.len()
            )));
        }
        Ok(())
    }

    fn default_pipelines(&self, lookback_days: u32, _: &Params) -> Vec<DataPipelineSpec> {
        vec![trailing_return_spec(lookback_days)]
    }

    fn compute(&self, ctx: &ExecutionContext<'_>) -> Result<OutcomeContent, StrategyError> {
        let k = Self::top_k(ctx.params)?;
        let rank = Rank::from_scores(row_at(first_dataset(ctx)?, ctx)?)?;
        let chosen: Vec<String> = rank.assets().take(k).map(str::to_string).collect();
        Ok(OutcomeContent::Portfolio(Portfolio::equal(&chosen)?))
    }
}

/// Every universe asset ranked by trailing return.
pub struct RankByMomentum;

impl RankByMomentum {
    pub const KIND: &'static str = "rank_by_momentum";
}

impl StrategyLogic for RankByMomentum {
    fn level(&self) -> StrategyLevel {
        StrategyLevel::DataPipeline
    }

    fn strategy_type(&self) -> StrategyType {
        StrategyType::Selection
    }

    fn validate(&self, spec: &StrategySpec) -> Result<(), StrategyError> {
        check_trailing_pipeline(spec)
    }

    fn default_pipelines(&self, lookback_days: u32, _: &Params) -> Vec<DataPipelineSpec> {
        vec![trailing_return_spec(lookback_days)]
    }

    fn compute(&self, ctx: &ExecutionContext<'_>) -> Result<OutcomeContent, StrategyError> {
        Ok(OutcomeContent::Rank(Rank::from_scores(row_at(first_dataset(ctx)?, ctx)?)?))
    }
}

/// Hedge signal from a one-factor regression of the cross-sectional mean
/// daily return on its previous value.
///
/// Training rows are `x = mean return on day t-1`, `y = mean return on day t`.
/// At execution the fitted model is applied to each asset's own latest
/// return and squashed into `[-1, 1]` with `tanh(prediction / signal_scale)`
/// (`signal_scale` defaults to 0.01).
pub struct RegressionSignal;

impl RegressionSignal {
    pub const KIND: &'static str = "regression_signal";
    pub const FEATURE: &'static str = "x";
    pub const TARGET: &'static str = "y";

    fn scale(params: &Params) -> Result<f64, StrategyError> {
        Ok(params.real_or("signal_scale", 0.01)?)
    }
}

fn cross_sectional_mean(row: &[f64]) -> f64 {
    row.iter().sum::<f64>() / row.len() as f64
}

impl StrategyLogic for RegressionSignal {
    fn level(&self) -> StrategyLevel {
        StrategyLevel::MachineLearning
    }

    fn strategy_type(&self) -> StrategyType {
        StrategyType::Hedge
    }

    fn validate(&self, spec: &StrategySpec) -> Result<(), StrategyError> {
        if spec.lookback_days == 0 {
            return Err(StrategyError::InvalidParams("lookback_days must be at least 1".into()));
        }
        let scale = Self::scale(&spec.params)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(StrategyError::InvalidParams(format!("signal_scale must be positive, got {scale}")));
        }
        if spec.pipelines[0].pipeline_kind != "simple_returns" {
            return Err(StrategyError::InvalidParams("first pipeline must be `simple_returns`".into()));
        }
        Ok(())
    }

    fn default_pipelines(&self, _: u32, _: &Params) -> Vec<DataPipelineSpec> {
        vec![DataPipelineSpec::new("simple_returns", Params::new())]
    }

    fn default_algorithms(&self, _: &Params) -> Vec<Box<dyn Algorithm>> {
        vec![Box::new(LinearRegression::new())]
    }

    fn training_set(
        &self,
        datasets: &[TimeSeriesDataset],
        _: &Params,
    ) -> Result<Option<(TimeSeriesDataset, Option<String>)>, StrategyError> {
        let returns = datasets.first().ok_or_else(|| StrategyError::InsufficientData("no return data".into()))?;
        if returns.n_rows() < 2 {
            return Err(StrategyError::InsufficientData(format!(
                "need at least 2 return rows to train, got {}",
                returns.n_rows()
            )));
        }
        let means: Vec<f64> = returns.rows().map(|(_, r)| cross_sectional_mean(r)).collect();
        let index = returns.index()[1..].to_vec();
        let values = means.windows(2).map(|w| vec![w[0], w[1]]).collect();
        let x = TimeSeriesDataset::new(index, vec![Self::FEATURE.into(), Self::TARGET.into()], values)
            .map_err(crate::data::DataError::from)?;
        Ok(Some((x, Some(Self::TARGET.to_string()))))
    }

    fn compute(&self, ctx: &ExecutionContext<'_>) -> Result<OutcomeContent, StrategyError> {
        let scale = Self::scale(ctx.params)?;
        let model = ctx.algorithms.first().ok_or_else(|| StrategyError::MissingAlgorithm(Self::KIND.into()))?;
        let latest = row_at(first_dataset(ctx)?, ctx)?;
        let mut values = BTreeMap::new();
        for (asset, r) in latest {
            let x = TimeSeriesDataset::new(vec![ctx.as_of], vec![Self::FEATURE.into()], vec![vec![r]])
                .map_err(crate::data::DataError::from)?;
            let pred = predict(model.as_ref(), &x)?.row(0)[0];
            if !pred.is_finite() {
                return Err(StrategyError::InvalidOutcome(format!("non-finite prediction for {asset}")));
            }
            values.insert(asset, (pred / scale).tanh());
        }
        Ok(OutcomeContent::Signal(Signal::new(values)?))
    }
}
