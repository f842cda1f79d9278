use serde::{Deserialize, Serialize};

use super::{decode_state, encode_state, Algorithm, AlgorithmError, AlgorithmManifest, Estimator, Transformer};
use crate::params::Params;
use crate::timeseries::TimeSeriesDataset;

/// Per-column standardization `(v − mean) / std` with the sample (n−1)
/// standard deviation. Missing cells are ignored when fitting and stay
/// missing when transforming. A column with fewer than two observations,
/// or no spread, has std 0 and maps to 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StandardScaler {
    state: Option<ScalerState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScalerState {
    columns: Vec<String>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl StandardScaler {
    pub const KIND: &'static str = "standard_scaler";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn means(&self) -> Option<&[f64]> {
        self.state.as_ref().map(|s| s.means.as_slice())
    }

    pub fn stds(&self) -> Option<&[f64]> {
        self.state.as_ref().map(|s| s.stds.as_slice())
    }

    pub fn fit(&self, x: &TimeSeriesDataset) -> Result<Self, AlgorithmError> {
        if x.is_empty() {
            return Err(AlgorithmError::EmptyData);
        }
        let mut means = Vec::with_capacity(x.n_cols());
        let mut stds = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let obs: Vec<f64> = (0..x.n_rows()).map(|i| x.row(i)[j]).filter(|v| !v.is_nan()).collect();
            let n = obs.len();
            let mean = if n == 0 { f64::NAN } else { obs.iter().sum::<f64>() / n as f64 };
            let std =
                if n < 2 { 0.0 } else { (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
            means.push(mean);
            stds.push(std);
        }
        Ok(Self { state: Some(ScalerState { columns: x.columns().to_vec(), means, stds }) })
    }

    pub fn transform(&self, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError> {
        let s = self.state.as_ref().ok_or(AlgorithmError::NotFitted)?;
        let pos = s
            .columns
            .iter()
            .map(|c| x.column_position(c).ok_or_else(|| AlgorithmError::MissingFeature(c.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let values = (0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                pos.iter()
                    .enumerate()
                    .map(|(k, &j)| {
                        let v = row[j];
                        if v.is_nan() {
                            v
                        } else if s.stds[k] == 0.0 {
                            0.0
                        } else {
                            (v - s.means[k]) / s.stds[k]
                        }
                    })
                    .collect()
            })
            .collect();
        TimeSeriesDataset::new(x.index().to_vec(), s.columns.clone(), values)
            .map_err(|e| AlgorithmError::Serialization(e.to_string()))
    }

    pub fn load(m: &AlgorithmManifest) -> Result<Self, AlgorithmError> {
        if m.state_blob.is_empty() {
            return Ok(Self::new());
        }
        let s: ScalerState = decode_state(Self::KIND, &m.state_blob)?;
        if s.means.len() != s.columns.len() || s.stds.len() != s.columns.len() {
            return Err(AlgorithmError::CorruptBlob {
                kind: Self::KIND.into(),
                reason: "column/statistic length mismatch".into(),
            });
        }
        Ok(Self { state: Some(s) })
    }

    pub(super) fn load_boxed(m: &AlgorithmManifest) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        Ok(Box::new(Self::load(m)?))
    }
}

impl Algorithm for StandardScaler {
    fn kind(&self) -> &str {
        Self::KIND
    }

    fn params(&self) -> Params {
        Params::new()
    }

    fn state_blob(&self) -> Result<Vec<u8>, AlgorithmError> {
        match &self.state {
            None => Ok(Vec::new()),
            Some(s) => encode_state(s),
        }
    }

    fn clone_box(&self) -> Box<dyn Algorithm> {
        Box::new(self.clone())
    }

    fn as_estimator(&self) -> Option<&dyn Estimator> {
        Some(self)
    }
}

impl Estimator for StandardScaler {
    fn is_supervised(&self) -> bool {
        false
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn fit_boxed(&self, x: &TimeSeriesDataset, _target: Option<&str>) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        Ok(Box::new(self.fit(x)?))
    }

    fn as_transformer(&self) -> Option<&dyn Transformer> {
        Some(self)
    }
}

impl Transformer for StandardScaler {
    fn transform(&self, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError> {
        StandardScaler::transform(self, x)
    }
}
