//! JSON form of a dataset: `{index, columns, values}` with missing cells as `null`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::num::Real;
use crate::timeseries::{TimeSeriesDataset, TradingDate};

#[derive(Serialize, Deserialize)]
struct Record<T> {
    index: Vec<TradingDate>,
    columns: Vec<String>,
    values: Vec<Vec<Option<T>>>,
}

impl<T: Real + Serialize> Serialize for TimeSeriesDataset<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        Record {
            index: self.index().to_vec(),
            columns: self.columns().to_vec(),
            values: (0..self.n_rows())
                .map(|i| self.row(i).iter().map(|v| (!v.is_nan()).then_some(*v)).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + DeserializeOwned> Deserialize<'de> for TimeSeriesDataset<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = Record::<T>::deserialize(deserializer)?;
        let values =
            r.values.into_iter().map(|row| row.into_iter().map(|v| v.unwrap_or_else(T::nan)).collect()).collect();
        TimeSeriesDataset::new(r.index, r.columns, values).map_err(serde::de::Error::custom)
    }
}

pub fn dataset_to_json(ds: &TimeSeriesDataset) -> Vec<u8> {
    serde_json::to_vec(ds).expect("dataset serialization is infallible")
}

pub fn dataset_from_json(bytes: &[u8]) -> Result<TimeSeriesDataset, serde_json::Error> {
    serde_json::from_slice(bytes)
}
