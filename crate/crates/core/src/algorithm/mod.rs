//! Algorithm contracts: serializable algorithms, estimators with composable
//! predictor/transformer capabilities, and reinforcement-learning agents
//! that train against a step/reset environment.
//!
//! Every algorithm round-trips through an [`AlgorithmManifest`]; kinds are
//! looked up by name in a process-wide registry so that manifests can be
//! embedded in saved strategies.

mod bandit;
mod env;
mod linear;
mod scaler;

use std::collections::HashMap;
use std::fmt;
use std::sync::{LazyLock, RwLock};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::params::{ParamError, Params};
use crate::timeseries::TimeSeriesDataset;

pub use bandit::EpsilonGreedyBandit;
pub use env::{EnvError, Environment, KArmedBandit, Space, StepResult};
pub use linear::LinearRegression;
pub use scaler::StandardScaler;

pub const ALGORITHM_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("unknown algorithm kind `{0}`")]
    UnknownKind(String),
    #[error("unsupported algorithm schema version {found} (supported: {supported})")]
    SchemaVersion { found: u32, supported: u32 },
    #[error("corrupt state blob for `{kind}`: {reason}")]
    CorruptBlob { kind: String, reason: String },
    #[error("cannot fit on an empty dataset")]
    EmptyData,
    #[error("supervised estimator needs a target column{}", .0.as_ref().map(|c| format!(" (`{c}` not found)")).unwrap_or_default())]
    MissingTarget(Option<String>),
    #[error("input is missing feature column `{0}`")]
    MissingFeature(String),
    #[error("estimator is not fitted")]
    NotFitted,
    #[error("`{kind}` does not support {capability}")]
    Capability { kind: String, capability: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Serialized algorithm: registered kind, hyperparameters and fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmManifest {
    pub schema_version: u32,
    pub algo_kind: String,
    pub params: Params,
    #[serde(rename = "state_blob_b64", with = "b64_bytes")]
    pub state_blob: Vec<u8>,
}

mod b64_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

impl AlgorithmManifest {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("manifest serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, AlgorithmError> {
        serde_json::from_slice(bytes).map_err(|e| AlgorithmError::Serialization(e.to_string()))
    }
}

/// Base contract: anything that can be saved and restored.
pub trait Algorithm: Send + Sync + fmt::Debug {
    fn kind(&self) -> &str;

    fn params(&self) -> Params;

    /// Kind-specific fitted state; empty when there is none yet.
    fn state_blob(&self) -> Result<Vec<u8>, AlgorithmError>;

    fn clone_box(&self) -> Box<dyn Algorithm>;

    fn save(&self) -> Result<AlgorithmManifest, AlgorithmError> {
        Ok(AlgorithmManifest {
            schema_version: ALGORITHM_SCHEMA_VERSION,
            algo_kind: self.kind().to_string(),
            params: self.params(),
            state_blob: self.state_blob()?,
        })
    }

    fn as_estimator(&self) -> Option<&dyn Estimator> {
        None
    }

    fn as_rl(&self) -> Option<&dyn RlAlgorithm> {
        None
    }
}

impl Clone for Box<dyn Algorithm> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Supervised or unsupervised learner. Fitting never mutates the receiver;
/// it returns a fitted copy.
pub trait Estimator {
    fn is_supervised(&self) -> bool;

    fn is_fitted(&self) -> bool;

    fn fit_boxed(&self, x: &TimeSeriesDataset, target: Option<&str>) -> Result<Box<dyn Algorithm>, AlgorithmError>;

    fn as_predictor(&self) -> Option<&dyn Predictor> {
        None
    }

    fn as_transformer(&self) -> Option<&dyn Transformer> {
        None
    }
}

pub trait Predictor {
    /// One `prediction` column, same index as `x`.
    fn predict(&self, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError>;
}

pub trait Transformer {
    fn transform(&self, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError>;
}

/// Reinforcement-learning agent over a discrete action space.
pub trait RlAlgorithm {
    fn rng_seed(&self) -> u64;

    /// Action with the highest learned value estimate.
    fn greedy_action(&self, observation: &[f64]) -> usize;

    fn train_boxed(&self, env: &mut dyn Environment, episodes: u32) -> Result<Box<dyn Algorithm>, AlgorithmError>;
}

pub type AlgorithmLoader = fn(&AlgorithmManifest) -> Result<Box<dyn Algorithm>, AlgorithmError>;

static ALGORITHM_KINDS: LazyLock<RwLock<HashMap<String, AlgorithmLoader>>> = LazyLock::new(|| {
    let mut m: HashMap<String, AlgorithmLoader> = HashMap::new();
    m.insert(LinearRegression::KIND.into(), LinearRegression::load_boxed);
    m.insert(StandardScaler::KIND.into(), StandardScaler::load_boxed);
    m.insert(EpsilonGreedyBandit::KIND.into(), EpsilonGreedyBandit::load_boxed);
    RwLock::new(m)
});

pub fn register_algorithm_kind(kind: &str, loader: AlgorithmLoader) {
    ALGORITHM_KINDS.write().expect("algorithm registry poisoned").insert(kind.to_string(), loader);
}

/// Registered kind names, sorted.
pub fn registered_algorithm_kinds() -> Vec<String> {
    let mut kinds: Vec<String> = ALGORITHM_KINDS.read().expect("algorithm registry poisoned").keys().cloned().collect();
    kinds.sort();
    kinds
}

pub fn save_algorithm(algo: &dyn Algorithm) -> Result<AlgorithmManifest, AlgorithmError> {
    algo.save()
}

pub fn load_algorithm(m: &AlgorithmManifest) -> Result<Box<dyn Algorithm>, AlgorithmError> {
    let loader = *ALGORITHM_KINDS
        .read()
        .expect("algorithm registry poisoned")
        .get(&m.algo_kind)
        .ok_or_else(|| AlgorithmError::UnknownKind(m.algo_kind.clone()))?;
    if m.schema_version != ALGORITHM_SCHEMA_VERSION {
        return Err(AlgorithmError::SchemaVersion { found: m.schema_version, supported: ALGORITHM_SCHEMA_VERSION });
    }
    loader(m)
}

fn capability(algo: &dyn Algorithm, capability: &'static str) -> AlgorithmError {
    AlgorithmError::Capability { kind: algo.kind().to_string(), capability }
}

pub fn fit(
    algo: &dyn Algorithm,
    x: &TimeSeriesDataset,
    target: Option<&str>,
) -> Result<Box<dyn Algorithm>, AlgorithmError> {
    algo.as_estimator().ok_or_else(|| capability(algo, "fit"))?.fit_boxed(x, target)
}

pub fn predict(algo: &dyn Algorithm, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError> {
    algo.as_estimator().and_then(|e| e.as_predictor()).ok_or_else(|| capability(algo, "predict"))?.predict(x)
}

pub fn transform(algo: &dyn Algorithm, x: &TimeSeriesDataset) -> Result<TimeSeriesDataset, AlgorithmError> {
    algo.as_estimator().and_then(|e| e.as_transformer()).ok_or_else(|| capability(algo, "transform"))?.transform(x)
}

pub fn rl_train(
    agent: &dyn Algorithm,
    env: &mut dyn Environment,
    episodes: u32,
) -> Result<Box<dyn Algorithm>, AlgorithmError> {
    agent.as_rl().ok_or_else(|| capability(agent, "reinforcement learning"))?.train_boxed(env, episodes)
}

/// Decode a JSON state blob, mapping failures to [`AlgorithmError::CorruptBlob`].
fn decode_state<T: serde::de::DeserializeOwned>(kind: &str, blob: &[u8]) -> Result<T, AlgorithmError> {
    serde_json::from_slice(blob)
        .map_err(|e| AlgorithmError::CorruptBlob { kind: kind.to_string(), reason: e.to_string() })
}

fn encode_state<T: Serialize>(state: &T) -> Result<Vec<u8>, AlgorithmError> {
    serde_json::to_vec(state).map_err(|e| AlgorithmError::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_json_shape() {
        let m = AlgorithmManifest {
            schema_version: 1,
            algo_kind: "linear_regression".into(),
            params: Params::new(),
            state_blob: b"{}".to_vec(),
        };
        let s = String::from_utf8(m.to_json()).unwrap();
        assert_eq!(s, r#"{"schema_version":1,"algo_kind":"linear_regression","params":{},"state_blob_b64":"e30="}"#);
        assert_eq!(AlgorithmManifest::from_json(s.as_bytes()).unwrap(), m);
    }

    #[test]
    fn unknown_kind() {
        let m =
            AlgorithmManifest { schema_version: 1, algo_kind: "xyz".into(), params: Params::new(), state_blob: vec![] };
        assert_eq!(load_algorithm(&m).unwrap_err(), AlgorithmError::UnknownKind("xyz".into()));
    }

    #[test]
    fn schema_version_checked() {
        let mut m = LinearRegression::new().save().unwrap();
        m.schema_version = 99;
        assert!(matches!(load_algorithm(&m), Err(AlgorithmError::SchemaVersion { found: 99, .. })));
    }

    #[test]
    fn registry_lists_builtins() {
        let kinds = registered_algorithm_kinds();
        for k in ["epsilon_greedy_bandit", "linear_regression", "standard_scaler"] {
            assert!(kinds.contains(&k.to_string()), "{k}");
        }
    }

    #[test]
    fn capability_errors() {
        let agent = EpsilonGreedyBandit::new(2, 0.5, 1);
        let d: crate::timeseries::TradingDate = "2022-01-03".parse().unwrap();
        let x = TimeSeriesDataset::new(vec![d], vec!["x".into()], vec![vec![1.0]]).unwrap();
        assert!(matches!(predict(&agent, &x), Err(AlgorithmError::Capability { .. })));
        assert!(matches!(transform(&LinearRegression::new(), &x), Err(AlgorithmError::Capability { .. })));
    }
}
