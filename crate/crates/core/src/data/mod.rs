//! Price and metadata loading behind a pluggable data source, plus the
//! data-pipeline contract that turns raw prices into strategy inputs.
//!
//! Callers only ever see [`TimeSeriesDataset`]s and [`AssetMetadata`]
//! records; the storage layout of the source stays behind
//! [`DataSourceConfig`].

mod codec;
mod pipeline;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ParamError;
use crate::timeseries::{TimeSeriesDataset, TimeSeriesError, TradingDate};

pub use codec::{dataset_from_json, dataset_to_json};
pub use pipeline::{
    generate, register_pipeline_kind, ClosePrices, DataPipeline, DataPipelineSpec, PipelineKind, SimpleReturns,
    TrailingReturn,
};

pub const PRICES_FILE: &str = "prices.csv";
pub const METADATA_FILE: &str = "metadata.csv";
const PRICES_HEADER: [&str; 3] = ["date", "asset_id", "close"];
const METADATA_HEADER: [&str; 5] = ["asset_id", "name", "sector", "category", "country"];

/// Identifier of the canonical fixture shipped with the crate.
pub const F1_FIXTURE: &str = "f1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("data source error: {0}")]
    Source(String),
    #[error("unknown in-memory fixture `{0}`")]
    UnknownFixture(String),
    #[error("no data source configured; assign configs before use")]
    MissingConfig,
    #[error("universe must not be empty")]
    EmptyUniverse,
    #[error("unknown data pipeline kind `{0}`")]
    UnknownPipeline(String),
    #[error("invalid data pipeline spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
}

/// Where prices and metadata come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source_kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSourceConfig {
    /// Directory holding `prices.csv` and (optionally) `metadata.csv`.
    CsvDir { root: PathBuf },
    /// A source registered in-process with [`register_fixture`].
    InMemoryFixture { fixture_id: String },
}

impl DataSourceConfig {
    pub fn csv_dir(root: impl Into<PathBuf>) -> Self {
        Self::CsvDir { root: root.into() }
    }

    pub fn fixture(id: &str) -> Self {
        Self::InMemoryFixture { fixture_id: id.to_string() }
    }

    /// The shipped F1 fixture.
    pub fn f1() -> Self {
        Self::fixture(F1_FIXTURE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetMetadata {
    pub asset_id: String,
    pub name: String,
    pub sector: String,
    pub category: String,
    pub country: String,
}

/// Fully materialized contents of one data source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceData {
    prices: HashMap<String, BTreeMap<TradingDate, f64>>,
    metadata: Vec<AssetMetadata>,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    asset_id: String,
    close: f64,
}

impl SourceData {
    pub fn new(
        prices: impl IntoIterator<Item = (TradingDate, String, f64)>,
        metadata: Vec<AssetMetadata>,
    ) -> Result<Self, DataError> {
        let mut table: HashMap<String, BTreeMap<TradingDate, f64>> = HashMap::new();
        for (date, asset, close) in prices {
            if asset.is_empty() {
                return Err(DataError::Source("empty asset_id in prices".into()));
            }
            if !close.is_finite() {
                return Err(DataError::Source(format!("non-finite close for {asset} on {date}")));
            }
            if table.entry(asset.clone()).or_default().insert(date, close).is_some() {
                return Err(DataError::Source(format!("duplicate price for {asset} on {date}")));
            }
        }
        let mut seen = HashSet::new();
        for m in &metadata {
            if m.asset_id.is_empty() {
                return Err(DataError::Source("empty asset_id in metadata".into()));
            }
            if !seen.insert(m.asset_id.as_str()) {
                return Err(DataError::Source(format!("duplicate metadata for {}", m.asset_id)));
            }
        }
        Ok(Self { prices: table, metadata })
    }

    /// Parse long-format price CSV and (optional) metadata CSV.
    pub fn from_csv(prices: impl Read, metadata: Option<impl Read>) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(prices);
        check_header(&mut rdr, &PRICES_HEADER, PRICES_FILE)?;
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<PriceRow>() {
            let rec = rec.map_err(|e| DataError::Source(format!("{PRICES_FILE}: {e}")))?;
            let date = TradingDate::parse(&rec.date).map_err(|e| DataError::Source(format!("{PRICES_FILE}: {e}")))?;
            rows.push((date, rec.asset_id, rec.close));
        }
        let mut meta = Vec::new();
        if let Some(m) = metadata {
            let mut rdr = csv::Reader::from_reader(m);
            check_header(&mut rdr, &METADATA_HEADER, METADATA_FILE)?;
            for rec in rdr.deserialize::<AssetMetadata>() {
                meta.push(rec.map_err(|e| DataError::Source(format!("{METADATA_FILE}: {e}")))?);
            }
        }
        Self::new(rows, meta)
    }

    pub fn from_dir(root: &Path) -> Result<Self, DataError> {
        let prices_path = root.join(PRICES_FILE);
        let prices =
            fs::File::open(&prices_path).map_err(|e| DataError::Source(format!("{}: {e}", prices_path.display())))?;
        let meta_path = root.join(METADATA_FILE);
        let meta = match fs::File::open(&meta_path) {
            Ok(f) => Some(f),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(DataError::Source(format!("{}: {e}", meta_path.display()))),
        };
        Self::from_csv(prices, meta)
    }

    pub fn assets(&self) -> BTreeSet<&str> {
        self.prices.keys().map(String::as_str).collect()
    }

    pub fn metadata(&self) -> &[AssetMetadata] {
        &self.metadata
    }

    /// Copy of this source with every observation after `date` removed.
    pub fn truncated_after(&self, date: TradingDate) -> Self {
        let prices = self
            .prices
            .iter()
            .map(|(a, series)| {
                let kept = series.range(..=date).map(|(d, c)| (*d, *c)).collect();
                (a.clone(), kept)
            })
            .collect();
        Self { prices, metadata: self.metadata.clone() }
    }

    /// Write this source as `prices.csv` / `metadata.csv` under `root`.
    pub fn write_csv_dir(&self, root: &Path) -> Result<(), DataError> {
        let io = |e: std::io::Error| DataError::Source(e.to_string());
        fs::create_dir_all(root).map_err(io)?;
        let mut rows: Vec<(TradingDate, &str, f64)> =
            self.prices.iter().flat_map(|(a, s)| s.iter().map(move |(d, c)| (*d, a.as_str(), *c))).collect();
        rows.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(y.1)));
        let mut out = String::from("date,asset_id,close\n");
        for (d, a, c) in rows {
            out.push_str(&format!("{d},{a},{c}\n"));
        }
        fs::write(root.join(PRICES_FILE), out).map_err(io)?;
        let mut w = csv::Writer::from_path(root.join(METADATA_FILE)).map_err(|e| DataError::Source(e.to_string()))?;
        w.write_record(METADATA_HEADER).map_err(|e| DataError::Source(e.to_string()))?;
        for m in &self.metadata {
            w.write_record([&m.asset_id, &m.name, &m.sector, &m.category, &m.country])
                .map_err(|e| DataError::Source(e.to_string()))?;
        }
        w.flush().map_err(io)
    }

    /// Close prices for `universe` on the dates within `[start, end]` where
    /// every requested asset has an observation. Columns follow `universe`.
    pub fn load_prices(
        &self,
        universe: &[String],
        start: TradingDate,
        end: TradingDate,
    ) -> Result<TimeSeriesDataset, DataError> {
        if universe.is_empty() {
            return Err(DataError::EmptyUniverse);
        }
        if start > end {
            return Err(TimeSeriesError::Range { start, end }.into());
        }
        let series = universe
            .iter()
            .map(|a| self.prices.get(a).ok_or_else(|| DataError::UnknownAsset(a.clone())))
            .collect::<Result<Vec<_>, _>>()?;

        let (first, rest) = series.split_first().expect("universe is non-empty");
        let index: Vec<TradingDate> =
            first.range(start..=end).map(|(d, _)| *d).filter(|d| rest.iter().all(|s| s.contains_key(d))).collect();
        let values = index.iter().map(|d| series.iter().map(|s| s[d]).collect()).collect();
        Ok(TimeSeriesDataset::new(index, universe.to_vec(), values)?)
    }

    pub fn load_metadata(&self, universe: &[String]) -> Result<Vec<AssetMetadata>, DataError> {
        universe
            .iter()
            .map(|a| {
                self.metadata
                    .iter()
                    .find(|m| &m.asset_id == a)
                    .cloned()
                    .ok_or_else(|| DataError::UnknownAsset(a.clone()))
            })
            .collect()
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], file: &str) -> Result<(), DataError> {
    let header = rdr.headers().map_err(|e| DataError::Source(format!("{file}: {e}")))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(DataError::Source(format!("{file}: header must be exactly `{}`", expected.join(","))));
    }
    Ok(())
}

static FIXTURES: LazyLock<RwLock<HashMap<String, Arc<SourceData>>>> = LazyLock::new(|| {
    let f1 = SourceData::from_csv(
        include_str!("../../fixtures/f1/prices.csv").as_bytes(),
        Some(include_str!("../../fixtures/f1/metadata.csv").as_bytes()),
    )
    .expect("shipped fixture parses");
    RwLock::new(HashMap::from([(F1_FIXTURE.to_string(), Arc::new(f1))]))
});

/// Make `data` reachable through `DataSourceConfig::InMemoryFixture { fixture_id: id }`.
/// Re-registering an id replaces the previous source.
pub fn register_fixture(id: &str, data: SourceData) {
    FIXTURES.write().expect("fixture registry poisoned").insert(id.to_string(), Arc::new(data));
}

/// Materialize the source named by `config`.
pub fn open_source(config: &DataSourceConfig) -> Result<Arc<SourceData>, DataError> {
    match config {
        DataSourceConfig::CsvDir { root } => SourceData::from_dir(root).map(Arc::new),
        DataSourceConfig::InMemoryFixture { fixture_id } => FIXTURES
            .read()
            .expect("fixture registry poisoned")
            .get(fixture_id)
            .cloned()
            .ok_or_else(|| DataError::UnknownFixture(fixture_id.clone())),
    }
}

pub fn load_prices(
    config: &DataSourceConfig,
    universe: &[String],
    start: TradingDate,
    end: TradingDate,
) -> Result<TimeSeriesDataset, DataError> {
    open_source(config)?.load_prices(universe, start, end)
}

pub fn load_metadata(config: &DataSourceConfig, universe: &[String]) -> Result<Vec<AssetMetadata>, DataError> {
    if universe.is_empty() {
        return Ok(Vec::new());
    }
    open_source(config)?.load_metadata(universe)
}
