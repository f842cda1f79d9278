//! Key → scalar parameter maps used by pipelines, algorithms, strategies and tasks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<u32> for ParamValue {
    fn from(v: u32) -> Self {
        ParamValue::Int(v.into())
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

impl From<String> for ParamValue {
    fn from(v: String) -> Self {
        ParamValue::Str(v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("missing parameter `{0}`")]
    Missing(String),
    #[error("parameter `{key}` must be {expected}, got `{got}`")]
    Type { key: String, expected: &'static str, got: String },
}

/// Ordered so that serialized parameter maps are deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(BTreeMap<String, ParamValue>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<ParamValue>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: &str, value: impl Into<ParamValue>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.0.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn type_err(key: &str, expected: &'static str, got: &ParamValue) -> ParamError {
        ParamError::Type { key: key.to_string(), expected, got: got.to_string() }
    }

    pub fn str(&self, key: &str) -> Result<&str, ParamError> {
        match self.get(key) {
            Some(ParamValue::Str(s)) => Ok(s),
            Some(other) => Err(Self::type_err(key, "a string", other)),
            None => Err(ParamError::Missing(key.to_string())),
        }
    }

    pub fn int(&self, key: &str) -> Result<i64, ParamError> {
        match self.get(key) {
            Some(ParamValue::Int(i)) => Ok(*i),
            Some(other) => Err(Self::type_err(key, "an integer", other)),
            None => Err(ParamError::Missing(key.to_string())),
        }
    }

    /// Integers are accepted where a real is expected.
    pub fn real(&self, key: &str) -> Result<f64, ParamError> {
        match self.get(key) {
            Some(ParamValue::Float(x)) => Ok(*x),
            Some(ParamValue::Int(i)) => Ok(*i as f64),
            Some(other) => Err(Self::type_err(key, "a number", other)),
            None => Err(ParamError::Missing(key.to_string())),
        }
    }

    pub fn non_negative(&self, key: &str) -> Result<u64, ParamError> {
        let v = self.int(key)?;
        u64::try_from(v).map_err(|_| Self::type_err(key, "a non-negative integer", &ParamValue::Int(v)))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str, ParamError> {
        if self.contains(key) {
            self.str(key)
        } else {
            Ok(default)
        }
    }

    pub fn real_or(&self, key: &str, default: f64) -> Result<f64, ParamError> {
        if self.contains(key) {
            self.real(key)
        } else {
            Ok(default)
        }
    }

    pub fn non_negative_or(&self, key: &str, default: u64) -> Result<u64, ParamError> {
        if self.contains(key) {
            self.non_negative(key)
        } else {
            Ok(default)
        }
    }
}

impl FromIterator<(String, ParamValue)> for Params {
    fn from_iter<I: IntoIterator<Item = (String, ParamValue)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
