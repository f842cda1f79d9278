//! Object store plus the strategy and outcome registry built on top of it.
//!
//! Key layout:
//!
//! | artifact          | key                                          |
//! |-------------------|----------------------------------------------|
//! | strategy          | `strategies/{id}/manifest.json`              |
//! | outcome           | `outcomes/{id}/{yyyy-mm-dd}.json`            |
//! | run report        | `runs/{run_id}/status.json`                  |
//! | task log          | `runs/{run_id}/logs/{task_id}.log`           |
//! | trained id        | `runs/{run_id}/strategy_id.txt`              |
//! | task artifact     | `runs/{run_id}/artifacts/{task_id}/{name}`   |
//! | backtest report   | `backtests/{id}/{run_id}/report.json`        |

mod store;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algorithm::AlgorithmManifest;
use crate::data::DataPipelineSpec;
use crate::ids::{RunId, StrategyId};
use crate::params::Params;
use crate::strategy::{new_strategy, Outcome, Strategy, StrategyError, StrategyMeta, StrategySpec};
use crate::timeseries::TradingDate;

pub use store::{FsStore, MemoryStore, ObjectKey, ObjectStore, StoreError};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("manifest `{key}` failed verification: {reason}")]
    DigestMismatch { key: String, reason: String },
    #[error("stored outcome `{key}` is unreadable: {reason}")]
    CorruptOutcome { key: String, reason: String },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

impl RegistryError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, RegistryError::Store(StoreError::NotFound(_)))
    }
}

pub mod keys {
    //! Builders for every key in the layout.

    use super::{ObjectKey, StoreError};
    use crate::ids::{RunId, StrategyId};
    use crate::timeseries::TradingDate;

    pub fn strategies_root() -> ObjectKey {
        ObjectKey::new("strategies").expect("static key")
    }

    pub fn strategy_manifest(id: &StrategyId) -> ObjectKey {
        ObjectKey::from_segments(&["strategies", id.as_str(), "manifest.json"]).expect("hex id is a valid segment")
    }

    pub fn outcomes(id: &StrategyId) -> ObjectKey {
        ObjectKey::from_segments(&["outcomes", id.as_str()]).expect("hex id is a valid segment")
    }

    pub fn outcome(id: &StrategyId, as_of: TradingDate) -> ObjectKey {
        outcomes(id).child(&format!("{as_of}.json")).expect("ISO date is a valid segment")
    }

    pub fn run(run_id: &RunId) -> ObjectKey {
        ObjectKey::from_segments(&["runs", run_id.as_str()]).expect("hex id is a valid segment")
    }

    pub fn run_status(run_id: &RunId) -> ObjectKey {
        run(run_id).child("status.json").expect("static segment")
    }

    pub fn task_log(run_id: &RunId, task_id: &str) -> Result<ObjectKey, StoreError> {
        ObjectKey::from_segments(&["runs", run_id.as_str(), "logs", &format!("{task_id}.log")])
    }

    pub fn trained_strategy_id(run_id: &RunId) -> ObjectKey {
        run(run_id).child("strategy_id.txt").expect("static segment")
    }

    pub fn task_artifact(run_id: &RunId, task_id: &str, name: &str) -> Result<ObjectKey, StoreError> {
        ObjectKey::from_segments(&["runs", run_id.as_str(), "artifacts", task_id, name])
    }

    pub fn backtest_report(id: &StrategyId, run_id: &RunId) -> ObjectKey {
        ObjectKey::from_segments(&["backtests", id.as_str(), run_id.as_str(), "report.json"])
            .expect("hex ids are valid segments")
    }
}

/// Serialized, digest-protected record sufficient to rebuild a strategy.
///
/// Data-source configs are deliberately absent; they are deployment-specific
/// and must be assigned again after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyManifest {
    pub schema_version: u32,
    pub strategy_id: StrategyId,
    pub strategy_kind: String,
    pub meta: StrategyMeta,
    pub horizon_days: u32,
    pub lookback_days: u32,
    pub rng_seed: u64,
    pub pipelines: Vec<DataPipelineSpec>,
    pub algorithms: Vec<AlgorithmManifest>,
    pub params: Params,
    pub created_at: DateTime<Utc>,
    pub content_digest: String,
}

impl StrategyManifest {
    pub fn new(id: StrategyId, spec: StrategySpec, created_at: DateTime<Utc>) -> Result<Self, RegistryError> {
        let mut m = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            strategy_id: id,
            strategy_kind: spec.strategy_kind,
            meta: spec.meta,
            horizon_days: spec.horizon_days,
            lookback_days: spec.lookback_days,
            rng_seed: spec.rng_seed,
            pipelines: spec.pipelines,
            algorithms: spec.algorithms,
            params: spec.params,
            created_at: created_at.trunc_subsecs(0),
            content_digest: String::new(),
        };
        m.content_digest = m.compute_digest()?;
        Ok(m)
    }

    /// SHA-256 (lowercase hex) of the compact JSON with an empty digest field.
    pub fn compute_digest(&self) -> Result<String, RegistryError> {
        let blank = Self { content_digest: String::new(), ..self.clone() };
        let bytes = serde_json::to_vec(&blank).map_err(|e| RegistryError::Serialization(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }

    /// Compact JSON; fails if the manifest would not read back identically
    /// (e.g. a non-finite float parameter).
    pub fn to_json(&self) -> Result<Vec<u8>, RegistryError> {
        let bytes = serde_json::to_vec(self).map_err(|e| RegistryError::Serialization(e.to_string()))?;
        match serde_json::from_slice::<Self>(&bytes) {
            Ok(back) if back == *self => Ok(bytes),
            _ => Err(RegistryError::Serialization("manifest does not survive a JSON round trip".into())),
        }
    }

    /// Parse and verify. Any deviation from the canonical bytes, including
    /// a wrong digest, is reported as [`RegistryError::DigestMismatch`].
    pub fn from_json(key: &ObjectKey, bytes: &[u8]) -> Result<Self, RegistryError> {
        let mismatch = |reason: String| RegistryError::DigestMismatch { key: key.to_string(), reason };
        let m: Self = serde_json::from_slice(bytes).map_err(|e| mismatch(format!("unparseable: {e}")))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(mismatch(format!("unsupported schema version {}", m.schema_version)));
        }
        let canonical = serde_json::to_vec(&m).map_err(|e| mismatch(e.to_string()))?;
        if canonical != bytes {
            return Err(mismatch("bytes are not in canonical form".into()));
        }
        let expected = m.compute_digest()?;
        if expected != m.content_digest {
            return Err(mismatch(format!("digest {} != computed {expected}", m.content_digest)));
        }
        Ok(m)
    }

    pub fn spec(&self) -> StrategySpec {
        StrategySpec {
            strategy_kind: self.strategy_kind.clone(),
            meta: self.meta.clone(),
            horizon_days: self.horizon_days,
            lookback_days: self.lookback_days,
            rng_seed: self.rng_seed,
            pipelines: self.pipelines.clone(),
            algorithms: self.algorithms.clone(),
            params: self.params.clone(),
        }
    }
}

/// Save under a fresh random id and return it.
pub fn save_strategy(store: &dyn ObjectStore, strategy: &Strategy) -> Result<StrategyId, RegistryError> {
    save_spec(store, strategy.to_spec()?)
}

/// Validate `spec` by constructing it, then save it under a fresh id.
pub fn save_spec(store: &dyn ObjectStore, spec: StrategySpec) -> Result<StrategyId, RegistryError> {
    new_strategy(spec.clone())?;
    let id = StrategyId::random();
    let manifest = StrategyManifest::new(id.clone(), spec, Utc::now())?;
    store.put(&keys::strategy_manifest(&id), &manifest.to_json()?)?;
    Ok(id)
}

pub fn load_manifest(store: &dyn ObjectStore, id: &StrategyId) -> Result<StrategyManifest, RegistryError> {
    let key = keys::strategy_manifest(id);
    let bytes = store.get(&key)?;
    let m = StrategyManifest::from_json(&key, &bytes)?;
    if m.strategy_id != *id {
        return Err(RegistryError::DigestMismatch {
            key: key.to_string(),
            reason: format!("manifest is for strategy {}", m.strategy_id),
        });
    }
    Ok(m)
}

/// Rebuild a saved strategy. Configs are not restored.
pub fn load_strategy(store: &dyn ObjectStore, id: &StrategyId) -> Result<Strategy, RegistryError> {
    let m = load_manifest(store, id)?;
    let mut s = new_strategy(m.spec())?;
    s.set_id(id.clone());
    Ok(s)
}

/// Ids of all saved strategies, sorted.
pub fn list_strategies(store: &dyn ObjectStore) -> Result<Vec<StrategyId>, RegistryError> {
    let mut ids: Vec<StrategyId> = store
        .list_prefix(&keys::strategies_root())?
        .iter()
        .filter_map(|k| match k.segments().collect::<Vec<_>>()[..] {
            [_, id, "manifest.json"] => StrategyId::parse(id).ok(),
            _ => None,
        })
        .collect();
    ids.dedup();
    Ok(ids)
}

/// Write `outcome` (attributed to `id`) at its dated key, replacing any
/// earlier outcome for the same date.
pub fn save_outcome(store: &dyn ObjectStore, id: &StrategyId, outcome: &Outcome) -> Result<ObjectKey, RegistryError> {
    let key = keys::outcome(id, outcome.as_of);
    let owned = Outcome { strategy_id: Some(id.clone()), ..outcome.clone() };
    store.put(&key, &owned.to_json())?;
    Ok(key)
}

pub fn load_outcome(store: &dyn ObjectStore, id: &StrategyId, as_of: TradingDate) -> Result<Outcome, RegistryError> {
    let key = keys::outcome(id, as_of);
    let bytes = store.get(&key)?;
    Outcome::from_json(&bytes)
        .map_err(|e| RegistryError::CorruptOutcome { key: key.to_string(), reason: e.to_string() })
}

/// Dates of all stored outcomes for `id`, ascending.
pub fn list_outcomes(store: &dyn ObjectStore, id: &StrategyId) -> Result<Vec<TradingDate>, RegistryError> {
    Ok(store
        .list_prefix(&keys::outcomes(id))?
        .iter()
        .filter_map(|k| k.segments().last()?.strip_suffix(".json")?.parse().ok())
        .collect())
}

pub fn save_backtest_report(
    store: &dyn ObjectStore,
    id: &StrategyId,
    run_id: &RunId,
    report: &[u8],
) -> Result<ObjectKey, RegistryError> {
    let key = keys::backtest_report(id, run_id);
    store.put(&key, report)?;
    Ok(key)
}
