use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, LazyLock, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use super::{open_source, DataError, DataSourceConfig, SourceData};
use crate::params::Params;
use crate::timeseries::{TimeSeriesDataset, TradingDate};

const SUPPORTED_FIELDS: [&str; 1] = ["close"];

/// Serializable description of a data pipeline: its registered kind and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPipelineSpec {
    pub pipeline_kind: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "default_fields")]
    pub required_fields: Vec<String>,
}

fn default_fields() -> Vec<String> {
    vec!["close".to_string()]
}

impl DataPipelineSpec {
    pub fn new(kind: &str, params: Params) -> Self {
        Self { pipeline_kind: kind.to_string(), params, required_fields: default_fields() }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(f) = self.required_fields.iter().find(|f| !SUPPORTED_FIELDS.contains(&f.as_str())) {
            return Err(DataError::InvalidSpec(format!("unsupported price field `{f}`")));
        }
        if self.params.contains("lookback_days") {
            self.params.non_negative("lookback_days")?;
        }
        pipeline_kind(&self.pipeline_kind)?.validate(&self.params)
    }
}

/// A registered way of turning close prices into a dataset.
pub trait PipelineKind: Send + Sync {
    fn validate(&self, _params: &Params) -> Result<(), DataError> {
        Ok(())
    }

    /// `prices` holds closes for the requested universe and range.
    fn transform(&self, params: &Params, prices: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DataError>;
}

/// Close prices unchanged.
pub struct ClosePrices;

impl PipelineKind for ClosePrices {
    fn transform(&self, _: &Params, prices: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DataError> {
        Ok(prices.clone())
    }
}

/// `close_t / close_{t-1} - 1`, first row dropped.
pub struct SimpleReturns;

impl PipelineKind for SimpleReturns {
    fn transform(&self, _: &Params, prices: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DataError> {
        lagged_return(prices, 1)
    }
}

/// `close_t / close_{t-L} - 1` with `L = lookback_days`, first `L` rows dropped.
pub struct TrailingReturn;

impl PipelineKind for TrailingReturn {
    fn validate(&self, params: &Params) -> Result<(), DataError> {
        params.non_negative("lookback_days")?;
        Ok(())
    }

    fn transform(&self, params: &Params, prices: &TimeSeriesDataset) -> Result<TimeSeriesDataset, DataError> {
        let lag = params.non_negative("lookback_days")? as usize;
        lagged_return(prices, lag)
    }
}

fn lagged_return(prices: &TimeSeriesDataset, lag: usize) -> Result<TimeSeriesDataset, DataError> {
    let n = prices.n_rows();
    if n <= lag {
        return Ok(TimeSeriesDataset::empty(prices.columns().to_vec())?);
    }
    let index = prices.index()[lag..].to_vec();
    let values = (lag..n)
        .map(|t| prices.row(t).iter().zip(prices.row(t - lag)).map(|(now, then)| now / then - 1.0).collect())
        .collect();
    Ok(TimeSeriesDataset::new(index, prices.columns().to_vec(), values)?)
}

static PIPELINE_KINDS: LazyLock<RwLock<HashMap<String, Arc<dyn PipelineKind>>>> = LazyLock::new(|| {
    let mut m: HashMap<String, Arc<dyn PipelineKind>> = HashMap::new();
    m.insert("close_prices".into(), Arc::new(ClosePrices));
    m.insert("simple_returns".into(), Arc::new(SimpleReturns));
    m.insert("trailing_return".into(), Arc::new(TrailingReturn));
    RwLock::new(m)
});

pub fn register_pipeline_kind(name: &str, kind: Arc<dyn PipelineKind>) {
    PIPELINE_KINDS.write().expect("pipeline registry poisoned").insert(name.to_string(), kind);
}

fn pipeline_kind(name: &str) -> Result<Arc<dyn PipelineKind>, DataError> {
    PIPELINE_KINDS
        .read()
        .expect("pipeline registry poisoned")
        .get(name)
        .cloned()
        .ok_or_else(|| DataError::UnknownPipeline(name.to_string()))
}

/// Run `spec` against `config` for `universe` over `[start, end]`.
pub fn generate(
    spec: &DataPipelineSpec,
    config: Option<&DataSourceConfig>,
    universe: &[String],
    start: TradingDate,
    end: TradingDate,
) -> Result<TimeSeriesDataset, DataError> {
    let config = config.ok_or(DataError::MissingConfig)?;
    let source = open_source(config)?;
    run_spec(spec, &source, universe, start, end)
}

fn run_spec(
    spec: &DataPipelineSpec,
    source: &SourceData,
    universe: &[String],
    start: TradingDate,
    end: TradingDate,
) -> Result<TimeSeriesDataset, DataError> {
    spec.validate()?;
    let prices = source.load_prices(universe, start, end)?;
    pipeline_kind(&spec.pipeline_kind)?.transform(&spec.params, &prices)
}

/// A pipeline spec bound to (optionally) a data source.
///
/// The source is opened lazily and cached until the config changes.
#[derive(Clone)]
pub struct DataPipeline {
    spec: DataPipelineSpec,
    config: Option<DataSourceConfig>,
    source: OnceLock<Arc<SourceData>>,
}

impl fmt::Debug for DataPipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataPipeline").field("spec", &self.spec).field("config", &self.config).finish()
    }
}

impl DataPipeline {
    pub fn new(spec: DataPipelineSpec) -> Result<Self, DataError> {
        spec.validate()?;
        Ok(Self { spec, config: None, source: OnceLock::new() })
    }

    pub fn spec(&self) -> &DataPipelineSpec {
        &self.spec
    }

    pub fn config(&self) -> Option<&DataSourceConfig> {
        self.config.as_ref()
    }

    pub fn set_config(&mut self, config: DataSourceConfig) {
        self.config = Some(config);
        self.source = OnceLock::new();
    }

    pub fn source(&self) -> Result<Arc<SourceData>, DataError> {
        let config = self.config.as_ref().ok_or(DataError::MissingConfig)?;
        if let Some(s) = self.source.get() {
            return Ok(s.clone());
        }
        let s = open_source(config)?;
        Ok(self.source.get_or_init(|| s).clone())
    }

    pub fn generate(
        &self,
        universe: &[String],
        start: TradingDate,
        end: TradingDate,
    ) -> Result<TimeSeriesDataset, DataError> {
        run_spec(&self.spec, self.source()?.as_ref(), universe, start, end)
    }
}
