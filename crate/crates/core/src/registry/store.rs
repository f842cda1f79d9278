use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("invalid object key `{0}`")]
    KeyFormat(String),
    #[error("object `{0}` not found")]
    NotFound(String),
    #[error("store i/o error at `{key}`: {reason}")]
    Io { key: String, reason: String },
}

impl StoreError {
    fn io(key: &ObjectKey, e: io::Error) -> Self {
        StoreError::Io { key: key.to_string(), reason: e.to_string() }
    }
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && s.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'.' | b'_' | b'-'))
}

/// `/`-separated path of segments matching `[a-z0-9._-]+`.
///
/// The segments `.` and `..` are rejected as well, since they would escape
/// or alias directories in the filesystem backend.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKey(String);

impl ObjectKey {
    pub fn new(s: &str) -> Result<Self, StoreError> {
        if !s.is_empty() && s.split('/').all(valid_segment) {
            Ok(Self(s.to_string()))
        } else {
            Err(StoreError::KeyFormat(s.to_string()))
        }
    }

    /// Key made of the given segments, each validated.
    pub fn from_segments<S: AsRef<str>>(segments: &[S]) -> Result<Self, StoreError> {
        let joined = segments.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("/");
        Self::new(&joined)
    }

    pub fn child(&self, segment: &str) -> Result<Self, StoreError> {
        Self::new(&format!("{}/{segment}", self.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }

    /// True when `self` equals `prefix` or lies underneath it.
    pub fn has_prefix(&self, prefix: &ObjectKey) -> bool {
        self.0 == prefix.0
            || (self.0.len() > prefix.0.len()
                && self.0.starts_with(&prefix.0)
                && self.0.as_bytes()[prefix.0.len()] == b'/')
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ObjectKey {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl Serialize for ObjectKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ObjectKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Flat key → bytes store.
///
/// Writes to a single key are atomic: a concurrent reader sees either the
/// old or the new value, never a mix.
pub trait ObjectStore: Send + Sync {
    fn put(&self, key: &ObjectKey, value: &[u8]) -> Result<(), StoreError>;

    fn get(&self, key: &ObjectKey) -> Result<Vec<u8>, StoreError>;

    /// Keys equal to `prefix` or underneath it, sorted.
    fn list_prefix(&self, prefix: &ObjectKey) -> Result<Vec<ObjectKey>, StoreError>;

    fn exists(&self, key: &ObjectKey) -> Result<bool, StoreError> {
        match self.get(key) {
            Ok(_) => Ok(true),
            Err(StoreError::NotFound(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// One file per object under a root directory; key segments become path
/// components.
///
/// Values are written to a temporary sibling whose name can never be a valid
/// key segment and then renamed into place. A key that is a strict prefix of
/// another key cannot be stored (it would have to be both a file and a
/// directory); such writes fail with [`StoreError::Io`].
#[derive(Debug, Clone)]
pub struct FsStore {
    root: PathBuf,
}

const TMP_PREFIX: &str = "~tmp-";

impl FsStore {
    /// Open (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::Io {
            key: String::new(),
            reason: format!("cannot create store root {}: {e}", root.display()),
        })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &ObjectKey) -> PathBuf {
        key.segments().fold(self.root.clone(), |p, s| p.join(s))
    }

    fn collect(&self, dir: &Path, rel: &mut Vec<String>, out: &mut Vec<ObjectKey>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let Some(name) = entry.file_name().to_str().map(str::to_string) else {
                continue;
            };
            if !valid_segment(&name) {
                continue;
            }
            rel.push(name);
            let ty = entry.file_type()?;
            if ty.is_dir() {
                self.collect(&entry.path(), rel, out)?;
            } else if ty.is_file() {
                out.push(ObjectKey(rel.join("/")));
            }
            rel.pop();
        }
        Ok(())
    }
}

impl ObjectStore for FsStore {
    fn put(&self, key: &ObjectKey, value: &[u8]) -> Result<(), StoreError> {
        let path = self.path(key);
        let parent = path.parent().expect("key path has a parent");
        fs::create_dir_all(parent).map_err(|e| StoreError::io(key, e))?;
        let tmp = parent.join(format!("{TMP_PREFIX}{:032x}", rand::random::<u128>()));
        let write = || -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(value)?;
            f.flush()?;
            if path.is_dir() {
                return Err(io::Error::new(io::ErrorKind::AlreadyExists, "key is a prefix of existing keys"));
            }
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            StoreError::io(key, e)
        })
    }

    fn get(&self, key: &ObjectKey) -> Result<Vec<u8>, StoreError> {
        let path = self.path(key);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound || path.is_dir() => {
                Err(StoreError::NotFound(key.to_string()))
            }
            // A file where a directory was expected also means "no such key".
            Err(_) if !path.exists() => Err(StoreError::NotFound(key.to_string())),
            Err(e) => Err(StoreError::io(key, e)),
        }
    }

    fn list_prefix(&self, prefix: &ObjectKey) -> Result<Vec<ObjectKey>, StoreError> {
        let path = self.path(prefix);
        let meta = match fs::metadata(&path) {
            Ok(m) => m,
            Err(_) => return Ok(Vec::new()),
        };
        if meta.is_file() {
            return Ok(vec![prefix.clone()]);
        }
        let mut out = Vec::new();
        let mut rel: Vec<String> = prefix.segments().map(str::to_string).collect();
        self.collect(&path, &mut rel, &mut out).map_err(|e| StoreError::io(prefix, e))?;
        out.sort();
        Ok(out)
    }
}

/// In-memory store with the same semantics as [`FsStore`], including the
/// rule that a key cannot also be a prefix of another key.
#[derive(Debug, Default)]
pub struct MemoryStore {
    objects: RwLock<BTreeMap<ObjectKey, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.read().expect("store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ObjectStore for MemoryStore {
    fn put(&self, key: &ObjectKey, value: &[u8]) -> Result<(), StoreError> {
        let mut objects = self.objects.write().expect("store poisoned");
        let conflict = objects.keys().any(|k| k != key && (k.has_prefix(key) || key.has_prefix(k)));
        if conflict {
            return Err(StoreError::Io {
                key: key.to_string(),
                reason: "key conflicts with an existing key prefix".into(),
            });
        }
        objects.insert(key.clone(), value.to_vec());
        Ok(())
    }

    fn get(&self, key: &ObjectKey) -> Result<Vec<u8>, StoreError> {
        self.objects
            .read()
            .expect("store poisoned")
            .get(key)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(key.to_string()))
    }

    fn list_prefix(&self, prefix: &ObjectKey) -> Result<Vec<ObjectKey>, StoreError> {
        Ok(self
            .objects
            .read()
            .expect("store poisoned")
            .range(prefix.clone()..)
            .map(|(k, _)| k)
            .take_while(|k| k.as_str().starts_with(prefix.as_str()))
            .filter(|k| k.has_prefix(prefix))
            .cloned()
            .collect())
    }
}
