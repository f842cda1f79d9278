pub mod algorithm;
pub mod backtest;
pub mod data;
pub mod ids;
pub mod num;
pub mod params;
pub mod pipeline;
pub mod registry;
pub mod strategy;
pub mod timeseries;

pub use ids::{RunId, StrategyId};

/// Dataset of `f64` values, the scalar used by data pipelines and strategies.
pub type Dataset = timeseries::TimeSeriesDataset<f64>;
