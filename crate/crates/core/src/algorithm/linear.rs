use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{decode_state, encode_state, Algorithm, AlgorithmError, AlgorithmManifest, Estimator, Predictor};
use crate::params::Params;
use crate::timeseries::TimeSeriesDataset;

/// Ordinary least squares with an optional intercept.
///
/// Features are every column of the training set except the target.
/// Rows with a missing feature or target are skipped during fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegression {
    fit_intercept: bool,
    state: Option<OlsState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OlsState {
    target: String,
    features: Vec<String>,
    coefficients: Vec<f64>,
    intercept: f64,
}

impl Default for LinearRegression {
    fn default() -> Self {
        Self::new()
    }
}

impl LinearRegression {
    pub const KIND: &'static str = "linear_regression";
    pub const OUTPUT_COLUMN: &'static str = "prediction";

    pub fn new() -> Self {
        Self { fit_intercept: true, state: None }
    }

    pub fn without_intercept() -> Self {
        Self { fit_intercept: false, state: None }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        self.state.as_ref().map(|s| s.coefficients.as_slice())
    }

    pub fn intercept(&self) -> Option<f64> {
        self.state.as_ref().map(|s| s.intercept)
    }

    pub fn features(&self) -> Option<&[String]> {
        self.state.as_ref().map(|s| s.features.as_slice())
    }

    pub fn fit(&self, x: &TimeSeriesDataset, target: Option<&str>) -> Result<Self, AlgorithmError> {
        if x.is_empty() {
            return Err(AlgorithmError::EmptyData);
        }
        let target = target.ok_or(AlgorithmError::MissingTarget(None))?;
        let t = x.column_position(target).ok_or_else(|| AlgorithmError::MissingTarget(Some(target.to_string())))?;
        let feature_pos: Vec<usize> = (0..x.n_cols()).filter(|&j| j != t).collect();

        let rows: Vec<&[f64]> = (0..x.n_rows()).map(|i| x.row(i)).filter(|r| r.iter().all(|v| !v.is_nan())).collect();
        if rows.is_empty() {
            return Err(AlgorithmError::EmptyData);
        }
        let offset = usize::from(self.fit_intercept);
        let p = feature_pos.len() + offset;
        let design =
            DMatrix::from_fn(rows.len(), p, |i, j| if j < offset { 1.0 } else { rows[i][feature_pos[j - offset]] });
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[t]));
        let beta = design.svd(true, true).solve(&y, 1e-12).map_err(|e| AlgorithmError::InvalidParam(e.to_string()))?;
        let intercept = if self.fit_intercept { beta[0] } else { 0.0 };
        Ok(Self {
            fit_intercept: self.fit_intercept,
            state: Some(OlsState {
                target: target.to_string(),
                features: feature_pos.iter().map(|&j| x.columns()[j].clone()).collect(),
                coefficients: beta.iter().skip(offset).copied().collect(),
                intercept,
            }),
        })
    }

    pub fn predict(&self, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError> {
        let s = self.state.as_ref().ok_or(AlgorithmError::NotFitted)?;
        let pos = s
            .features
            .iter()
            .map(|f| x.column_position(f).ok_or_else(|| AlgorithmError::MissingFeature(f.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let values = (0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                let y = pos.iter().zip(&s.coefficients).fold(s.intercept, |acc, (&j, b)| acc + b * row[j]);
                vec![y]
            })
            .collect();
        TimeSeriesDataset::new(x.index().to_vec(), vec![Self::OUTPUT_COLUMN.to_string()], values)
            .map_err(|e| AlgorithmError::Serialization(e.to_string()))
    }

    pub fn load(m: &AlgorithmManifest) -> Result<Self, AlgorithmError> {
        let fit_intercept = match m.params.get("fit_intercept") {
            None => true,
            Some(crate::params::ParamValue::Bool(b)) => *b,
            Some(other) => return Err(AlgorithmError::InvalidParam(format!("fit_intercept = {other}"))),
        };
        let state = if m.state_blob.is_empty() {
            None
        } else {
            let s: OlsState = decode_state(Self::KIND, &m.state_blob)?;
            if s.features.len() != s.coefficients.len() {
                return Err(AlgorithmError::CorruptBlob {
                    kind: Self::KIND.into(),
                    reason: "feature/coefficient length mismatch".into(),
                });
            }
            Some(s)
        };
        Ok(Self { fit_intercept, state })
    }

    pub(super) fn load_boxed(m: &AlgorithmManifest) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        Ok(Box::new(Self::load(m)?))
    }
}

impl Algorithm for LinearRegression {
    fn kind(&self) -> &str {
        Self::KIND
    }

    fn params(&self) -> Params {
        Params::new().with("fit_intercept", self.fit_intercept)
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

impl Estimator for LinearRegression {
    fn is_supervised(&self) -> bool {
        true
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn fit_boxed(&self, x: &TimeSeriesDataset, target: Option<&str>) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        Ok(Box::new(self.fit(x, target)?))
    }

    fn as_predictor(&self) -> Option<&dyn Predictor> {
        Some(self)
    }
}

impl Predictor for LinearRegression {
    fn predict(&self, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError> {
        LinearRegression::predict(self, x)
    }
}
