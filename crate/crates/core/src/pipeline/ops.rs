//! Built-in task ops and the train/inference DAG templates.
//!
//! Train chain: `generate_data → fit_algorithms → assemble_strategy →
//! save_strategy`. Inference chain: `load_strategy → execute_strategy →
//! save_outcome`. Intermediate results travel as run artifacts.

use super::runner::{TaskContext, TaskError, TaskRegistry};
use super::{PipelineDag, TaskSpec};
use crate::algorithm::AlgorithmManifest;
use crate::backtest::{run_report, BacktestRequest, Frequency, Grouping};
use crate::ids::StrategyId;
use crate::params::Params;
use crate::registry::{
    keys, load_manifest, load_strategy, save_backtest_report, save_outcome, save_spec, StrategyManifest,
};
use crate::strategy::{new_strategy, Outcome, StrategyError, StrategyInterface, StrategySpec};
use crate::timeseries::{TimeSeriesDataset, TradingDate};

pub const OP_GENERATE_DATA: &str = "generate_data";
pub const OP_FIT_ALGORITHMS: &str = "fit_algorithms";
pub const OP_ASSEMBLE_STRATEGY: &str = "assemble_strategy";
pub const OP_SAVE_STRATEGY: &str = "save_strategy";
pub const OP_LOAD_STRATEGY: &str = "load_strategy";
pub const OP_EXECUTE_STRATEGY: &str = "execute_strategy";
pub const OP_SAVE_OUTCOME: &str = "save_outcome";
pub const OP_RUN_BACKTEST: &str = "run_backtest";

const DATASETS: &str = "datasets.json";
const ALGORITHMS: &str = "algorithms.json";
const STRATEGY: &str = "strategy.json";
const MANIFEST: &str = "manifest.json";
const OUTCOME: &str = "outcome.json";

/// Optional bounds on the data used for training; open ends mean "all data".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainWindow {
    pub start: Option<TradingDate>,
    pub end: Option<TradingDate>,
}

/// First day of the window passed to `reset` when executing on `as_of`:
/// `as_of − max(3·lookback_days, 30)` calendar days.
pub fn inference_window_start(as_of: TradingDate, lookback_days: u32) -> TradingDate {
    as_of.add_days(-(i64::from(lookback_days) * 3).max(30))
}

/// Four-task chain that builds, fits and saves the strategy described by
/// `product`. The product is validated here, before any DAG exists.
pub fn build_train_pipeline(product: &StrategySpec, window: TrainWindow) -> Result<PipelineDag, StrategyError> {
    new_strategy(product.clone())?;
    let json = serde_json::to_string(product).map_err(|e| StrategyError::InvalidParams(e.to_string()))?;
    let mut data_params = Params::new().with("product", json.as_str());
    if let Some(s) = window.start {
        data_params.insert("train_start", s.to_string());
    }
    if let Some(e) = window.end {
        data_params.insert("train_end", e.to_string());
    }
    let product_only = Params::new().with("product", json.as_str());
    Ok(PipelineDag::new(
        &format!("train-{}", product.strategy_kind),
        vec![
            TaskSpec::new(OP_GENERATE_DATA, OP_GENERATE_DATA).with_params(data_params),
            TaskSpec::new(OP_FIT_ALGORITHMS, OP_FIT_ALGORITHMS)
                .with_params(product_only.clone())
                .after(OP_GENERATE_DATA),
            TaskSpec::new(OP_ASSEMBLE_STRATEGY, OP_ASSEMBLE_STRATEGY)
                .with_params(product_only)
                .after(OP_FIT_ALGORITHMS),
            TaskSpec::new(OP_SAVE_STRATEGY, OP_SAVE_STRATEGY).after(OP_ASSEMBLE_STRATEGY),
        ],
    ))
}

/// Three-task chain that executes a saved strategy on `as_of` and stores the outcome.
pub fn build_inference_pipeline(strategy_id: &StrategyId, as_of: TradingDate) -> PipelineDag {
    let id = Params::new().with("strategy_id", strategy_id.as_str());
    PipelineDag::new(
        &format!("infer-{as_of}"),
        vec![
            TaskSpec::new(OP_LOAD_STRATEGY, OP_LOAD_STRATEGY).with_params(id.clone()),
            TaskSpec::new(OP_EXECUTE_STRATEGY, OP_EXECUTE_STRATEGY)
                .with_params(Params::new().with("as_of", as_of.to_string()))
                .after(OP_LOAD_STRATEGY),
            TaskSpec::new(OP_SAVE_OUTCOME, OP_SAVE_OUTCOME).with_params(id).after(OP_EXECUTE_STRATEGY),
        ],
    )
}

pub(super) fn register_builtins(r: &mut TaskRegistry) {
    r.register(OP_GENERATE_DATA, generate_data);
    r.register(OP_FIT_ALGORITHMS, fit_algorithms);
    r.register(OP_ASSEMBLE_STRATEGY, assemble_strategy);
    r.register(OP_SAVE_STRATEGY, save_strategy);
    r.register(OP_LOAD_STRATEGY, load_strategy_op);
    r.register(OP_EXECUTE_STRATEGY, execute_strategy);
    r.register(OP_SAVE_OUTCOME, save_outcome_op);
    r.register(OP_RUN_BACKTEST, run_backtest_op);
}

fn product(ctx: &TaskContext<'_>) -> Result<StrategySpec, TaskError> {
    Ok(serde_json::from_str(ctx.params.str("product")?)?)
}

fn date_param(ctx: &TaskContext<'_>, key: &str) -> Result<Option<TradingDate>, TaskError> {
    match ctx.params.get(key) {
        None => Ok(None),
        Some(_) => Ok(Some(ctx.params.str(key)?.parse()?)),
    }
}

fn required_date(ctx: &TaskContext<'_>, key: &str) -> Result<TradingDate, TaskError> {
    date_param(ctx, key)?.ok_or_else(|| TaskError::msg(format!("missing param `{key}`")))
}

fn strategy_id(ctx: &TaskContext<'_>) -> Result<StrategyId, TaskError> {
    Ok(StrategyId::parse(ctx.params.str("strategy_id")?)?)
}

fn generate_data(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let spec = product(ctx)?;
    let start = date_param(ctx, "train_start")?.unwrap_or(TradingDate::MIN);
    let end = date_param(ctx, "train_end")?.unwrap_or(TradingDate::MAX);
    let mut s = new_strategy(spec)?;
    s.set_configs(ctx.data.clone());
    let datasets = s.generate_data(start, end)?;
    for (p, ds) in s.pipelines().iter().zip(&datasets) {
        ctx.log(format!("pipeline {}: {} rows x {} columns", p.spec().pipeline_kind, ds.n_rows(), ds.n_cols()));
    }
    ctx.put_artifact(DATASETS, &serde_json::to_vec(&datasets)?)?;
    Ok(())
}

fn fit_algorithms(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let s = new_strategy(product(ctx)?)?;
    let datasets: Vec<TimeSeriesDataset> = serde_json::from_slice(&ctx.upstream_artifact(DATASETS)?)?;
    let fitted = s.fit_algorithms(&datasets)?;
    let manifests = fitted.iter().map(|a| a.save()).collect::<Result<Vec<_>, _>>()?;
    for m in &manifests {
        ctx.log(format!("algorithm {}: {} state bytes", m.algo_kind, m.state_blob.len()));
    }
    ctx.put_artifact(ALGORITHMS, &serde_json::to_vec(&manifests)?)?;
    Ok(())
}

fn assemble_strategy(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let mut spec = product(ctx)?;
    spec.algorithms = serde_json::from_slice::<Vec<AlgorithmManifest>>(&ctx.upstream_artifact(ALGORITHMS)?)?;
    new_strategy(spec.clone())?;
    ctx.log(format!("assembled {} strategy", spec.strategy_kind));
    ctx.put_artifact(STRATEGY, &serde_json::to_vec(&spec)?)?;
    Ok(())
}

fn save_strategy(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let spec: StrategySpec = serde_json::from_slice(&ctx.upstream_artifact(STRATEGY)?)?;
    let id = save_spec(ctx.store, spec)?;
    ctx.store.put(&keys::trained_strategy_id(ctx.run_id), id.as_str().as_bytes())?;
    ctx.log(format!("saved strategy {id}"));
    Ok(())
}

fn load_strategy_op(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let id = strategy_id(ctx)?;
    let manifest = load_manifest(ctx.store, &id)?;
    ctx.log(format!("loaded {} strategy {id}", manifest.strategy_kind));
    ctx.put_artifact(MANIFEST, &manifest.to_json()?)?;
    Ok(())
}

fn execute_strategy(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let as_of = required_date(ctx, "as_of")?;
    let bytes = ctx.upstream_artifact(MANIFEST)?;
    let manifest = StrategyManifest::from_json(&keys::task_artifact(ctx.run_id, "upstream", MANIFEST)?, &bytes)?;
    let mut s = new_strategy(manifest.spec())?;
    s.set_id(manifest.strategy_id.clone());
    s.set_configs(ctx.data.clone());
    let start = inference_window_start(as_of, s.lookback_days());
    let valid = s.reset(start, as_of)?;
    ctx.log(format!("reset({start}, {as_of}): {} valid dates", valid.len()));
    let outcome = s.execute(as_of)?;
    ctx.log(format!("executed on {as_of}: {}", outcome.content.content_type()));
    ctx.put_artifact(OUTCOME, &outcome.to_json())?;
    Ok(())
}

fn save_outcome_op(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let id = strategy_id(ctx)?;
    let outcome = Outcome::from_json(&ctx.upstream_artifact(OUTCOME)?)?;
    let key = save_outcome(ctx.store, &id, &outcome)?;
    ctx.log(format!("saved outcome at {key}"));
    Ok(())
}

fn run_backtest_op(ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
    let id = strategy_id(ctx)?;
    let frequency = match ctx.params.get("interval_days") {
        Some(_) => Frequency::custom(ctx.params.int("interval_days")?)?,
        None => ctx.params.str_or("frequency", "monthly")?.parse()?,
    };
    let request = BacktestRequest {
        start: required_date(ctx, "start")?,
        end: required_date(ctx, "end")?,
        frequency,
        grouping: ctx.params.str_or("group_by", "asset")?.parse::<Grouping>()?,
    };
    let mut s = load_strategy(ctx.store, &id)?;
    let report = run_report(&mut s, ctx.data, &request)?;
    let key = save_backtest_report(ctx.store, &id, ctx.run_id, &report.to_json())?;
    ctx.log(format!(
        "cumulative return {} over {} periods; report at {key}",
        report.metrics.cumulative_return,
        report.period_returns.len()
    ));
    Ok(())
}
