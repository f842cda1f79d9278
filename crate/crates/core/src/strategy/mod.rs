//! Strategy interfaces and the reference strategies.
//!
//! A strategy is constructed from a [`StrategySpec`]: universe, benchmark and
//! type metadata, the data pipelines it reads, the algorithms it owns and
//! kind-specific parameters. Its lifecycle is
//! `set_configs → reset(start, end) → execute(date)`; `reset` returns the
//! dates on which `execute` may be called.
//!
//! Three levels exist. Base strategies need only metadata. Data-pipeline
//! strategies additionally own at least one [`DataPipeline`]. ML strategies
//! also own at least one algorithm. The level is a property of the
//! registered kind (see [`StrategyLogic`]).

mod outcome;
mod reference;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, LazyLock, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithm::{load_algorithm, Algorithm, AlgorithmError, AlgorithmManifest};
use crate::data::{open_source, DataError, DataPipeline, DataPipelineSpec, DataSourceConfig, SourceData};
use crate::ids::StrategyId;
use crate::params::{ParamError, Params};
use crate::timeseries::{TimeSeriesDataset, TradingDate};

pub use outcome::{format_weight, Outcome, OutcomeContent, Portfolio, Rank, Signal, OUTCOME_SCHEMA_VERSION};
pub use reference::{EqualWeight, MomentumTopK, RankByMomentum, RegressionSignal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("universe must not be empty")]
    EmptyUniverse,
    #[error("asset `{0}` appears more than once in the universe")]
    DuplicateAsset(String),
    #[error("benchmark `{0}` must not be part of the universe")]
    BenchmarkInUniverse(String),
    #[error("benchmark must not be empty")]
    EmptyBenchmark,
    #[error("strategy kind `{0}` requires at least one algorithm")]
    MissingAlgorithm(String),
    #[error("strategy kind `{0}` requires at least one data pipeline")]
    MissingPipeline(String),
    #[error("unknown strategy kind `{0}`")]
    UnknownKind(String),
    #[error("strategy kind `{kind}` produces {expected:?} outcomes, not {got:?}")]
    TypeMismatch { kind: String, expected: StrategyType, got: StrategyType },
    #[error("invalid strategy parameters: {0}")]
    InvalidParams(String),
    #[error("invalid range: start {start} is after end {end}")]
    Range { start: TradingDate, end: TradingDate },
    #[error("strategy must be reset before execute")]
    NotReset,
    #[error("{0} is not a valid date for this strategy")]
    InvalidDate(TradingDate),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

impl From<ParamError> for StrategyError {
    fn from(e: ParamError) -> Self {
        StrategyError::InvalidParams(e.to_string())
    }
}

impl StrategyError {
    /// True when the error is the missing-config precondition failure.
    pub fn is_missing_config(&self) -> bool {
        matches!(self, StrategyError::Data(DataError::MissingConfig))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyType {
    /// Produces portfolios.
    Allocation,
    /// Produces ranks.
    Selection,
    /// Produces signals.
    Hedge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StrategyLevel {
    Base,
    DataPipeline,
    MachineLearning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyMeta {
    pub universe: Vec<String>,
    pub benchmark: String,
    pub strategy_type: StrategyType,
}

impl StrategyMeta {
    pub fn new(universe: &[&str], benchmark: &str, strategy_type: StrategyType) -> Self {
        Self {
            universe: universe.iter().map(|s| s.to_string()).collect(),
            benchmark: benchmark.to_string(),
            strategy_type,
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.universe.is_empty() {
            return Err(StrategyError::EmptyUniverse);
        }
        if self.benchmark.is_empty() {
            return Err(StrategyError::EmptyBenchmark);
        }
        let mut seen = BTreeSet::new();
        for a in &self.universe {
            if a.is_empty() {
                return Err(StrategyError::InvalidParams("empty asset id in universe".into()));
            }
            if !seen.insert(a.as_str()) {
                return Err(StrategyError::DuplicateAsset(a.clone()));
            }
        }
        if seen.contains(self.benchmark.as_str()) {
            return Err(StrategyError::BenchmarkInUniverse(self.benchmark.clone()));
        }
        Ok(())
    }
}

fn one() -> u32 {
    1
}

/// Everything needed to construct a strategy; also the serializable body of
/// a saved strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub strategy_kind: String,
    pub meta: StrategyMeta,
    #[serde(default = "one")]
    pub horizon_days: u32,
    #[serde(default)]
    pub lookback_days: u32,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub pipelines: Vec<DataPipelineSpec>,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmManifest>,
    #[serde(default)]
    pub params: Params,
}

impl StrategySpec {
    pub fn new(kind: &str, meta: StrategyMeta) -> Self {
        Self {
            strategy_kind: kind.to_string(),
            meta,
            horizon_days: 1,
            lookback_days: 0,
            rng_seed: 0,
            pipelines: Vec::new(),
            algorithms: Vec::new(),
            params: Params::new(),
        }
    }

    /// Spec with the kind's default pipelines and algorithms filled in.
    pub fn with_defaults(
        kind: &str,
        meta: StrategyMeta,
        lookback_days: u32,
        params: Params,
    ) -> Result<Self, StrategyError> {
        let logic = strategy_kind(kind)?;
        let mut spec = Self::new(kind, meta);
        spec.lookback_days = lookback_days;
        spec.pipelines = logic.default_pipelines(lookback_days, &params);
        spec.algorithms = logic.default_algorithms(&params).iter().map(|a| a.save()).collect::<Result<_, _>>()?;
        spec.params = params;
        Ok(spec)
    }

    pub fn equal_weight(meta: StrategyMeta) -> Self {
        Self::with_defaults(EqualWeight::KIND, meta, 0, Params::new()).expect("built-in kind")
    }

    pub fn momentum_topk(meta: StrategyMeta, lookback_days: u32, top_k: u32) -> Self {
        Self::with_defaults(MomentumTopK::KIND, meta, lookback_days, Params::new().with("top_k", top_k))
            .expect("built-in kind")
    }

    pub fn rank_by_momentum(meta: StrategyMeta, lookback_days: u32) -> Self {
        Self::with_defaults(RankByMomentum::KIND, meta, lookback_days, Params::new()).expect("built-in kind")
    }

    pub fn regression_signal(meta: StrategyMeta, lookback_days: u32) -> Self {
        Self::with_defaults(RegressionSignal::KIND, meta, lookback_days, Params::new()).expect("built-in kind")
    }

    pub fn with_horizon(mut self, horizon_days: u32) -> Self {
        self.horizon_days = horizon_days;
        self
    }
}

/// Data handed to [`StrategyLogic::compute`]: one dataset per owned pipeline,
/// each containing only rows dated on or before `as_of`.
pub struct ExecutionContext<'a> {
    pub as_of: TradingDate,
    pub universe: &'a [String],
    pub lookback_days: u32,
    pub rng_seed: u64,
    pub params: &'a Params,
    pub datasets: &'a [TimeSeriesDataset],
    pub algorithms: &'a [Box<dyn Algorithm>],
}

/// Kind-specific behavior behind a registered strategy name.
pub trait StrategyLogic: Send + Sync {
    fn level(&self) -> StrategyLevel;

    fn strategy_type(&self) -> StrategyType;

    fn validate(&self, _spec: &StrategySpec) -> Result<(), StrategyError> {
        Ok(())
    }

    fn default_pipelines(&self, _lookback_days: u32, _params: &Params) -> Vec<DataPipelineSpec> {
        Vec::new()
    }

    fn default_algorithms(&self, _params: &Params) -> Vec<Box<dyn Algorithm>> {
        Vec::new()
    }

    fn compute(&self, ctx: &ExecutionContext<'_>) -> Result<OutcomeContent, StrategyError>;

    /// Training set (features plus the named target column) derived from
    /// the generated pipeline datasets. `None` means nothing to fit.
    fn training_set(
        &self,
        _datasets: &[TimeSeriesDataset],
        _params: &Params,
    ) -> Result<Option<(TimeSeriesDataset, Option<String>)>, StrategyError> {
        Ok(None)
    }
}

static STRATEGY_KINDS: LazyLock<RwLock<HashMap<String, Arc<dyn StrategyLogic>>>> = LazyLock::new(|| {
    let mut m: HashMap<String, Arc<dyn StrategyLogic>> = HashMap::new();
    m.insert(EqualWeight::KIND.into(), Arc::new(EqualWeight));
    m.insert(MomentumTopK::KIND.into(), Arc::new(MomentumTopK));
    m.insert(RankByMomentum::KIND.into(), Arc::new(RankByMomentum));
    m.insert(RegressionSignal::KIND.into(), Arc::new(RegressionSignal));
    RwLock::new(m)
});

pub fn register_strategy_kind(kind: &str, logic: Arc<dyn StrategyLogic>) {
    STRATEGY_KINDS.write().expect("strategy registry poisoned").insert(kind.to_string(), logic);
}

pub fn registered_strategy_kinds() -> Vec<String> {
    let mut kinds: Vec<String> = STRATEGY_KINDS.read().expect("strategy registry poisoned").keys().cloned().collect();
    kinds.sort();
    kinds
}

fn strategy_kind(kind: &str) -> Result<Arc<dyn StrategyLogic>, StrategyError> {
    STRATEGY_KINDS
        .read()
        .expect("strategy registry poisoned")
        .get(kind)
        .cloned()
        .ok_or_else(|| StrategyError::UnknownKind(kind.to_string()))
}

/// The public strategy contract: metadata getters, configs, reset and execute.
///
/// The backtesting engine only ever talks to strategies through this trait.
pub trait StrategyInterface {
    fn strategy_id(&self) -> Option<&StrategyId>;
    fn universe(&self) -> &[String];
    fn benchmark(&self) -> &str;
    fn strategy_type(&self) -> StrategyType;
    fn horizon_days(&self) -> u32;
    fn set_configs(&mut self, config: DataSourceConfig);
    fn reset(&mut self, start: TradingDate, end: TradingDate) -> Result<Vec<TradingDate>, StrategyError>;
    fn execute(&self, date: TradingDate) -> Result<Outcome, StrategyError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetState {
    pub start: TradingDate,
    pub end: TradingDate,
    pub valid_dates: Vec<TradingDate>,
}

/// A constructed strategy instance.
#[derive(Clone)]
pub struct Strategy {
    id: Option<StrategyId>,
    kind: String,
    meta: StrategyMeta,
    horizon_days: u32,
    lookback_days: u32,
    rng_seed: u64,
    params: Params,
    pipelines: Vec<DataPipeline>,
    algorithms: Vec<Box<dyn Algorithm>>,
    config: Option<DataSourceConfig>,
    source: OnceLock<Arc<SourceData>>,
    reset_state: Option<ResetState>,
    logic: Arc<dyn StrategyLogic>,
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Strategy")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("meta", &self.meta)
            .field("horizon_days", &self.horizon_days)
            .field("lookback_days", &self.lookback_days)
            .field("pipelines", &self.pipelines)
            .field("algorithms", &self.algorithms)
            .field("config", &self.config)
            .field("reset_state", &self.reset_state)
            .finish()
    }
}

/// Construct a strategy, validating metadata and the kind's level requirements.
pub fn new_strategy(spec: StrategySpec) -> Result<Strategy, StrategyError> {
    Strategy::new(spec)
}

impl Strategy {
    pub fn new(spec: StrategySpec) -> Result<Self, StrategyError> {
        spec.meta.validate()?;
        let logic = strategy_kind(&spec.strategy_kind)?;
        if spec.meta.strategy_type != logic.strategy_type() {
            return Err(StrategyError::TypeMismatch {
                kind: spec.strategy_kind.clone(),
                expected: logic.strategy_type(),
                got: spec.meta.strategy_type,
            });
        }
        if spec.horizon_days == 0 {
            return Err(StrategyError::InvalidParams("horizon_days must be at least 1".into()));
        }
        let level = logic.level();
        if level >= StrategyLevel::DataPipeline && spec.pipelines.is_empty() {
            return Err(StrategyError::MissingPipeline(spec.strategy_kind.clone()));
        }
        if level >= StrategyLevel::MachineLearning && spec.algorithms.is_empty() {
            return Err(StrategyError::MissingAlgorithm(spec.strategy_kind.clone()));
        }
        logic.validate(&spec)?;
        let pipelines = spec.pipelines.into_iter().map(DataPipeline::new).collect::<Result<_, _>>()?;
        let algorithms = spec.algorithms.iter().map(load_algorithm).collect::<Result<_, _>>()?;
        Ok(Self {
            id: None,
            kind: spec.strategy_kind,
            meta: spec.meta,
            horizon_days: spec.horizon_days,
            lookback_days: spec.lookback_days,
            rng_seed: spec.rng_seed,
            params: spec.params,
            pipelines,
            algorithms,
            config: None,
            source: OnceLock::new(),
            reset_state: None,
            logic,
        })
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn meta(&self) -> &StrategyMeta {
        &self.meta
    }

    pub fn level(&self) -> StrategyLevel {
        self.logic.level()
    }

    pub fn lookback_days(&self) -> u32 {
        self.lookback_days
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn pipelines(&self) -> &[DataPipeline] {
        &self.pipelines
    }

    pub fn algorithms(&self) -> &[Box<dyn Algorithm>] {
        &self.algorithms
    }

    pub fn config(&self) -> Option<&DataSourceConfig> {
        self.config.as_ref()
    }

    pub fn reset_state(&self) -> Option<&ResetState> {
        self.reset_state.as_ref()
    }

    pub fn set_id(&mut self, id: StrategyId) {
        self.id = Some(id);
    }

    /// Replace owned algorithms, e.g. with fitted copies.
    pub fn set_algorithms(&mut self, algorithms: Vec<Box<dyn Algorithm>>) -> Result<(), StrategyError> {
        if self.level() >= StrategyLevel::MachineLearning && algorithms.is_empty() {
            return Err(StrategyError::MissingAlgorithm(self.kind.clone()));
        }
        self.algorithms = algorithms;
        Ok(())
    }

    /// Serializable description of this strategy (configs and reset state excluded).
    pub fn to_spec(&self) -> Result<StrategySpec, StrategyError> {
        Ok(StrategySpec {
            strategy_kind: self.kind.clone(),
            meta: self.meta.clone(),
            horizon_days: self.horizon_days,
            lookback_days: self.lookback_days,
            rng_seed: self.rng_seed,
            pipelines: self.pipelines.iter().map(|p| p.spec().clone()).collect(),
            algorithms: self.algorithms.iter().map(|a| a.save()).collect::<Result<_, _>>()?,
            params: self.params.clone(),
        })
    }

    /// Run every owned pipeline over `[start, end]`.
    pub fn generate_data(&self, start: TradingDate, end: TradingDate) -> Result<Vec<TimeSeriesDataset>, StrategyError> {
        self.pipelines
            .iter()
            .map(|p| p.generate(&self.meta.universe, start, end).map_err(StrategyError::from))
            .collect()
    }

    /// Fit every owned estimator on the kind's training set built from `datasets`.
    /// Algorithms that are not estimators are returned unchanged.
    pub fn fit_algorithms(&self, datasets: &[TimeSeriesDataset]) -> Result<Vec<Box<dyn Algorithm>>, StrategyError> {
        let Some((x, target)) = self.logic.training_set(datasets, &self.params)? else {
            return Ok(self.algorithms.clone());
        };
        self.algorithms
            .iter()
            .map(|a| match a.as_estimator() {
                Some(e) => e.fit_boxed(&x, target.as_deref()).map_err(StrategyError::from),
                None => Ok(a.clone()),
            })
            .collect()
    }

    /// Generate data over `[start, end]` and fit in place.
    pub fn train(&mut self, start: TradingDate, end: TradingDate) -> Result<(), StrategyError> {
        let data = self.generate_data(start, end)?;
        let fitted = self.fit_algorithms(&data)?;
        self.set_algorithms(fitted)
    }

    fn source(&self) -> Result<Arc<SourceData>, StrategyError> {
        let config = self.config.as_ref().ok_or(DataError::MissingConfig)?;
        if let Some(s) = self.source.get() {
            return Ok(s.clone());
        }
        let s = open_source(config)?;
        Ok(self.source.get_or_init(|| s).clone())
    }

    /// Dates in `[start, end]` on which every universe asset has a price,
    /// excluding the first `lookback_days` dates of the full price calendar.
    pub fn valid_dates(&self, start: TradingDate, end: TradingDate) -> Result<Vec<TradingDate>, StrategyError> {
        if start > end {
            return Err(StrategyError::Range { start, end });
        }
        let calendar = self.source()?.load_prices(&self.meta.universe, TradingDate::MIN, end)?;
        Ok(calendar.index().iter().skip(self.lookback_days as usize).filter(|d| **d >= start).copied().collect())
    }
}

impl StrategyInterface for Strategy {
    fn strategy_id(&self) -> Option<&StrategyId> {
        self.id.as_ref()
    }

    fn universe(&self) -> &[String] {
        &self.meta.universe
    }

    fn benchmark(&self) -> &str {
        &self.meta.benchmark
    }

    fn strategy_type(&self) -> StrategyType {
        self.meta.strategy_type
    }

    fn horizon_days(&self) -> u32 {
        self.horizon_days
    }

    fn set_configs(&mut self, config: DataSourceConfig) {
        for p in &mut self.pipelines {
            p.set_config(config.clone());
        }
        self.config = Some(config);
        self.source = OnceLock::new();
    }

    fn reset(&mut self, start: TradingDate, end: TradingDate) -> Result<Vec<TradingDate>, StrategyError> {
        let valid_dates = self.valid_dates(start, end)?;
        self.reset_state = Some(ResetState { start, end, valid_dates: valid_dates.clone() });
        Ok(valid_dates)
    }

    fn execute(&self, date: TradingDate) -> Result<Outcome, StrategyError> {
        let state = self.reset_state.as_ref().ok_or(StrategyError::NotReset)?;
        if state.valid_dates.binary_search(&date).is_err() {
            return Err(StrategyError::InvalidDate(date));
        }
        // Pipelines only ever see data up to the execution date.
        let datasets = self.generate_data(TradingDate::MIN, date)?;
        let ctx = ExecutionContext {
            as_of: date,
            universe: &self.meta.universe,
            lookback_days: self.lookback_days,
            rng_seed: self.rng_seed,
            params: &self.params,
            datasets: &datasets,
            algorithms: &self.algorithms,
        };
        let content = self.logic.compute(&ctx)?;
        if content.strategy_type() != self.meta.strategy_type {
            return Err(StrategyError::TypeMismatch {
                kind: self.kind.clone(),
                expected: self.meta.strategy_type,
                got: content.strategy_type(),
            });
        }
        content.check_universe(&self.meta.universe)?;
        Ok(Outcome { strategy_id: self.id.clone(), as_of: date, horizon_days: self.horizon_days, content })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::LinearRegression;

    fn d(s: &str) -> TradingDate {
        s.parse().unwrap()
    }

    fn alloc_meta() -> StrategyMeta {
        StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Allocation)
    }

    fn weights(o: &Outcome) -> Vec<(String, f64)> {
        o.content.as_portfolio().unwrap().weights().iter().map(|(a, w)| (a.clone(), *w)).collect()
    }

    #[test]
    fn getters_echo_constructor() {
        let s = new_strategy(StrategySpec::equal_weight(alloc_meta())).unwrap();
        assert_eq!(s.universe(), &["AAA".to_string(), "BBB".to_string()]);
        assert_eq!(s.benchmark(), "BMK");
        assert_eq!(StrategyInterface::strategy_type(&s), StrategyType::Allocation);
        assert_eq!(s.horizon_days(), 1);
        assert_eq!(s.level(), StrategyLevel::DataPipeline);
    }

    #[test]
    fn constructor_validation() {
        let dup = StrategyMeta::new(&["AAA", "AAA"], "BMK", StrategyType::Allocation);
        assert_eq!(
            new_strategy(StrategySpec::equal_weight(dup)).unwrap_err(),
            StrategyError::DuplicateAsset("AAA".into())
        );
        let empty = StrategyMeta::new(&[], "BMK", StrategyType::Allocation);
        assert_eq!(new_strategy(StrategySpec::equal_weight(empty)).unwrap_err(), StrategyError::EmptyUniverse);
        let bench = StrategyMeta::new(&["AAA", "BMK"], "BMK", StrategyType::Allocation);
        assert!(matches!(new_strategy(StrategySpec::equal_weight(bench)), Err(StrategyError::BenchmarkInUniverse(_))));
        let hedge = StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Hedge);
        let mut ml = StrategySpec::regression_signal(hedge, 1);
        ml.algorithms.clear();
        assert!(matches!(new_strategy(ml), Err(StrategyError::MissingAlgorithm(_))));
        let mut dp = StrategySpec::equal_weight(alloc_meta());
        dp.pipelines.clear();
        assert!(matches!(new_strategy(dp), Err(StrategyError::MissingPipeline(_))));
        let wrong = StrategySpec::equal_weight(StrategyMeta::new(&["AAA"], "BMK", StrategyType::Hedge));
        assert!(matches!(new_strategy(wrong), Err(StrategyError::TypeMismatch { .. })));
        assert!(matches!(new_strategy(StrategySpec::new("nope", alloc_meta())), Err(StrategyError::UnknownKind(_))));
    }

    #[test]
    fn reset_requires_configs() {
        let mut s = new_strategy(StrategySpec::equal_weight(alloc_meta())).unwrap();
        let err = s.reset(d("2022-01-01"), d("2022-01-07")).unwrap_err();
        assert!(err.is_missing_config(), "{err:?}");
    }

    #[test]
    fn equal_weight_valid_dates_and_outcome() {
        let mut s = new_strategy(StrategySpec::equal_weight(alloc_meta())).unwrap();
        s.set_configs(DataSourceConfig::f1());
        let valid = s.reset(d("2022-01-01"), d("2022-01-07")).unwrap();
        let expected: Vec<TradingDate> =
            ["2022-01-03", "2022-01-04", "2022-01-05", "2022-01-06", "2022-01-07"].iter().map(|x| d(x)).collect();
        assert_eq!(valid, expected);
        let o = s.execute(d("2022-01-03")).unwrap();
        assert_eq!(o.horizon_days, 1);
        assert_eq!(o.as_of, d("2022-01-03"));
        assert_eq!(weights(&o), vec![("AAA".into(), 0.5), ("BBB".into(), 0.5)]);
    }

    #[test]
    fn momentum_warm_up_and_pick() {
        let mut s = new_strategy(StrategySpec::momentum_topk(alloc_meta(), 2, 1)).unwrap();
        s.set_configs(DataSourceConfig::f1());
        let valid = s.reset(d("2022-01-01"), d("2022-01-07")).unwrap();
        assert_eq!(valid, vec![d("2022-01-05"), d("2022-01-06"), d("2022-01-07")]);
        let o = s.execute(d("2022-01-05")).unwrap();
        assert_eq!(weights(&o), vec![("AAA".into(), 1.0)]);
        assert_eq!(s.execute(d("2022-01-04")).unwrap_err(), StrategyError::InvalidDate(d("2022-01-04")));
    }

    #[test]
    fn execute_before_reset() {
        let mut s = new_strategy(StrategySpec::equal_weight(alloc_meta())).unwrap();
        s.set_configs(DataSourceConfig::f1());
        assert_eq!(s.execute(d("2022-01-03")).unwrap_err(), StrategyError::NotReset);
    }

    #[test]
    fn reversed_range() {
        let mut s = new_strategy(StrategySpec::equal_weight(alloc_meta())).unwrap();
        s.set_configs(DataSourceConfig::f1());
        assert!(matches!(s.reset(d("2022-01-07"), d("2022-01-01")), Err(StrategyError::Range { .. })));
    }

    #[test]
    fn configs_last_one_wins() {
        let mut s = new_strategy(StrategySpec::equal_weight(alloc_meta())).unwrap();
        s.set_configs(DataSourceConfig::fixture("missing-fixture"));
        assert!(s.reset(d("2022-01-01"), d("2022-01-07")).is_err());
        s.set_configs(DataSourceConfig::f1());
        assert_eq!(s.reset(d("2022-01-01"), d("2022-01-07")).unwrap().len(), 5);
        assert!(s.pipelines().iter().all(|p| p.config() == Some(&DataSourceConfig::f1())));
    }

    #[test]
    fn rank_outcome() {
        let meta = StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Selection);
        let mut s = new_strategy(StrategySpec::rank_by_momentum(meta, 2)).unwrap();
        s.set_configs(DataSourceConfig::f1());
        s.reset(d("2022-01-01"), d("2022-01-07")).unwrap();
        let o = s.execute(d("2022-01-05")).unwrap();
        let OutcomeContent::Rank(r) = &o.content else { panic!("expected rank") };
        assert_eq!(r.assets().collect::<Vec<_>>(), ["AAA", "BBB"]);
        assert!((r.entries()[0].1 - 0.21).abs() < 1e-12);
    }

    #[test]
    fn regression_signal_trains_and_signals() {
        let meta = StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Hedge);
        let mut s = new_strategy(StrategySpec::regression_signal(meta, 1)).unwrap();
        s.set_configs(DataSourceConfig::f1());
        s.reset(d("2022-01-01"), d("2022-01-07")).unwrap();
        assert!(matches!(s.execute(d("2022-01-07")), Err(StrategyError::Algorithm(AlgorithmError::NotFitted))));
        s.train(d("2022-01-03"), d("2022-01-07")).unwrap();
        let o = s.execute(d("2022-01-07")).unwrap();
        let OutcomeContent::Signal(sig) = &o.content else { panic!("expected signal") };
        assert_eq!(sig.values().len(), 2);
        assert!(sig.values().values().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn spec_round_trip_keeps_behavior() {
        let meta = StrategyMeta::new(&["AAA", "BBB"], "BMK", StrategyType::Hedge);
        let mut s = new_strategy(StrategySpec::regression_signal(meta, 1)).unwrap();
        s.set_configs(DataSourceConfig::f1());
        s.train(d("2022-01-03"), d("2022-01-07")).unwrap();
        assert!(s.algorithms()[0].as_estimator().unwrap().is_fitted());
        let mut copy = new_strategy(s.to_spec().unwrap()).unwrap();
        copy.set_configs(DataSourceConfig::f1());
        s.reset(d("2022-01-01"), d("2022-01-07")).unwrap();
        copy.reset(d("2022-01-01"), d("2022-01-07")).unwrap();
        assert_eq!(s.execute(d("2022-01-06")).unwrap(), copy.execute(d("2022-01-06")).unwrap());
        assert_eq!(copy.algorithms()[0].kind(), LinearRegression::KIND);
    }
}
