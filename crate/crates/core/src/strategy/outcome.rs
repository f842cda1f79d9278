use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{StrategyError, StrategyType};
use crate::ids::StrategyId;
use crate::timeseries::TradingDate;

pub const OUTCOME_SCHEMA_VERSION: u32 = 1;
const WEIGHT_TOLERANCE: f64 = 1e-9;
const WEIGHT_DIGITS: usize = 12;

/// Long-only weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    weights: BTreeMap<String, f64>,
}

impl Portfolio {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self, StrategyError> {
        let invalid = |m: String| Err(StrategyError::InvalidOutcome(m));
        if weights.is_empty() {
            return invalid("portfolio has no assets".into());
        }
        if let Some((a, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return invalid(format!("weight of {a} is {w}; weights must be finite and non-negative"));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return invalid(format!("weights sum to {total}, expected 1"));
        }
        Ok(Self { weights })
    }

    /// Equal weights over `assets`.
    pub fn equal(assets: &[String]) -> Result<Self, StrategyError> {
        let w = 1.0 / assets.len() as f64;
        Self::new(assets.iter().map(|a| (a.clone(), w)).collect())
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn weight(&self, asset: &str) -> f64 {
        self.weights.get(asset).copied().unwrap_or(0.0)
    }
}

/// Assets ordered by descending score, ties by ascending asset id.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank {
    entries: Vec<(String, f64)>,
}

impl Rank {
    pub fn from_scores(scores: impl IntoIterator<Item = (String, f64)>) -> Result<Self, StrategyError> {
        let mut entries: Vec<(String, f64)> = scores.into_iter().collect();
        if let Some((a, s)) = entries.iter().find(|(_, s)| !s.is_finite()) {
            return Err(StrategyError::InvalidOutcome(format!("score of {a} is {s}")));
        }
        let unique: BTreeSet<&str> = entries.iter().map(|(a, _)| a.as_str()).collect();
        if unique.len() != entries.len() {
            return Err(StrategyError::InvalidOutcome("rank lists an asset twice".into()));
        }
        entries.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn assets(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(a, _)| a.as_str())
    }
}

/// Per-asset values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: BTreeMap<String, f64>,
}

impl Signal {
    pub fn new(values: BTreeMap<String, f64>) -> Result<Self, StrategyError> {
        if let Some((a, v)) = values.iter().find(|(_, v)| !(-1.0..=1.0).contains(*v)) {
            return Err(StrategyError::InvalidOutcome(format!("signal of {a} is {v}, outside [-1, 1]")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeContent {
    Portfolio(Portfolio),
    Rank(Rank),
    Signal(Signal),
}

impl OutcomeContent {
    pub fn content_type(&self) -> &'static str {
        match self {
            OutcomeContent::Portfolio(_) => "portfolio",
            OutcomeContent::Rank(_) => "rank",
            OutcomeContent::Signal(_) => "signal",
        }
    }

    /// The strategy type whose outcomes carry this content.
    pub fn strategy_type(&self) -> StrategyType {
        match self {
            OutcomeContent::Portfolio(_) => StrategyType::Allocation,
            OutcomeContent::Rank(_) => StrategyType::Selection,
            OutcomeContent::Signal(_) => StrategyType::Hedge,
        }
    }

    pub fn as_portfolio(&self) -> Option<&Portfolio> {
        match self {
            OutcomeContent::Portfolio(p) => Some(p),
            _ => None,
        }
    }

    /// Check membership against `universe`; ranks must list every asset once.
    pub fn check_universe(&self, universe: &[String]) -> Result<(), StrategyError> {
        let members: BTreeSet<&str> = universe.iter().map(String::as_str).collect();
        let outside = |a: &str| StrategyError::InvalidOutcome(format!("{a} is not in the universe"));
        match self {
            OutcomeContent::Portfolio(p) => {
                p.weights.keys().try_for_each(|a| members.contains(a.as_str()).then_some(()).ok_or_else(|| outside(a)))
            }
            OutcomeContent::Signal(s) => {
                s.values.keys().try_for_each(|a| members.contains(a.as_str()).then_some(()).ok_or_else(|| outside(a)))
            }
            OutcomeContent::Rank(r) => {
                let listed: BTreeSet<&str> = r.assets().collect();
                if listed == members && r.entries.len() == members.len() {
                    Ok(())
                } else {
                    Err(StrategyError::InvalidOutcome("rank must list every universe asset exactly once".into()))
                }
            }
        }
    }
}

/// Dated result of one execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub strategy_id: Option<StrategyId>,
    pub as_of: TradingDate,
    pub horizon_days: u32,
    pub content: OutcomeContent,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeWire {
    schema_version: u32,
    strategy_id: String,
    as_of: TradingDate,
    horizon_days: u32,
    content_type: String,
    content: Value,
}

#[derive(Serialize, Deserialize)]
struct RankEntry {
    asset_id: String,
    score: f64,
}

/// Fixed-point rendering with at most 12 fractional digits, trailing zeros trimmed.
pub fn format_weight(w: f64) -> String {
    if w == 0.0 {
        return "0".into();
    }
    let s = format!("{w:.WEIGHT_DIGITS$}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl Outcome {
    pub fn to_json(&self) -> Vec<u8> {
        let content = match &self.content {
            OutcomeContent::Portfolio(p) => Value::Object(
                p.weights.iter().map(|(a, w)| (a.clone(), Value::String(format_weight(*w)))).collect::<Map<_, _>>(),
            ),
            OutcomeContent::Rank(r) => {
                Value::Array(r.entries.iter().map(|(a, s)| json!({"asset_id": a, "score": s})).collect())
            }
            OutcomeContent::Signal(s) => {
                Value::Object(s.values.iter().map(|(a, v)| (a.clone(), json!(v))).collect::<Map<_, _>>())
            }
        };
        let wire = OutcomeWire {
            schema_version: OUTCOME_SCHEMA_VERSION,
            strategy_id: self.strategy_id.as_ref().map(|i| i.to_string()).unwrap_or_default(),
            as_of: self.as_of,
            horizon_days: self.horizon_days,
            content_type: self.content.content_type().to_string(),
            content,
        };
        serde_json::to_vec(&wire).expect("outcome serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, StrategyError> {
        let bad = |m: String| StrategyError::InvalidOutcome(m);
        let wire: OutcomeWire = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        if wire.schema_version != OUTCOME_SCHEMA_VERSION {
            return Err(bad(format!("unsupported outcome schema version {}", wire.schema_version)));
        }
        let strategy_id = if wire.strategy_id.is_empty() {
            None
        } else {
            Some(StrategyId::parse(&wire.strategy_id).map_err(|e| bad(e.to_string()))?)
        };
        let content = match wire.content_type.as_str() {
            "portfolio" => {
                let raw: BTreeMap<String, String> =
                    serde_json::from_value(wire.content).map_err(|e| bad(e.to_string()))?;
                let weights = raw
                    .into_iter()
                    .map(|(a, w)| {
                        w.parse::<f64>().map(|w| (a, w)).map_err(|_| bad(format!("weight `{w}` is not a decimal")))
                    })
                    .collect::<Result<_, _>>()?;
                OutcomeContent::Portfolio(Portfolio::new(weights)?)
            }
            "rank" => {
                let entries: Vec<RankEntry> = serde_json::from_value(wire.content).map_err(|e| bad(e.to_string()))?;
                OutcomeContent::Rank(Rank::from_scores(entries.into_iter().map(|e| (e.asset_id, e.score)))?)
            }
            "signal" => {
                let values = serde_json::from_value(wire.content).map_err(|e| bad(e.to_string()))?;
                OutcomeContent::Signal(Signal::new(values)?)
            }
            other => return Err(bad(format!("unknown content_type `{other}`"))),
        };
        if wire.horizon_days == 0 {
            return Err(bad("horizon_days must be at least 1".into()));
        }
        Ok(Self { strategy_id, as_of: wire.as_of, horizon_days: wire.horizon_days, content })
    }
}
