//! Document storage for essays, analyses and sessions.
//!
//! Every record is a JSON payload addressed by (kind, id); the latest write
//! wins. [`FileStore`] keeps one file per record, [`MemoryStore`] is for tests
//! and throwaway servers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Essay,
    Analysis,
    Session,
}

impl RecordKind {
    pub const ALL: [RecordKind; 3] = [RecordKind::Essay, RecordKind::Analysis, RecordKind::Session];

    fn dir(self) -> &'static str {
        match self {
            RecordKind::Essay => "essays",
            RecordKind::Analysis => "analyses",
            RecordKind::Session => "sessions",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Essay => "essay",
            RecordKind::Analysis => "analysis",
            RecordKind::Session => "session",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub kind: RecordKind,
    pub id: String,
    pub payload: Value,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid record id {0:?}")]
    BadId(String),
    #[error("storage I/O failed for {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("stored record {path} is corrupt: {source}")]
    Corrupt {
        path: PathBuf,
        source: serde_json::Error,
    },
}

pub trait Store: Send + Sync {
    fn put(&self, kind: RecordKind, id: &str, payload: Value) -> Result<StoreRecord, StoreError>;
    fn get(&self, kind: RecordKind, id: &str) -> Result<Option<StoreRecord>, StoreError>;
    /// All records of a kind, ordered by id.
    fn list(&self, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError>;
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::BadId(id.to_string()))
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    records: RwLock<BTreeMap<(RecordKind, String), StoreRecord>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn put(&self, kind: RecordKind, id: &str, payload: Value) -> Result<StoreRecord, StoreError> {
        check_id(id)?;
        let record = StoreRecord {
            kind,
            id: id.to_string(),
            payload,
            updated_at: Utc::now(),
        };
        self.records
            .write()
            .expect("store lock poisoned")
            .insert((kind, id.to_string()), record.clone());
        Ok(record)
    }

    fn get(&self, kind: RecordKind, id: &str) -> Result<Option<StoreRecord>, StoreError> {
        check_id(id)?;
        Ok(self
            .records
            .read()
            .expect("store lock poisoned")
            .get(&(kind, id.to_string()))
            .cloned())
    }

    fn list(&self, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        Ok(self
            .records
            .read()
            .expect("store lock poisoned")
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|(_, r)| r.clone())
            .collect())
    }
}

/// One JSON file per record under `<root>/<kind>/<id>.json`. Writes go to a
/// temporary file that is then renamed over the old one.
#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    write_lock: std::sync::Mutex<()>,
}

impl FileStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        for kind in RecordKind::ALL {
            let dir = root.join(kind.dir());
            std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir, source })?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            write_lock: std::sync::Mutex::new(()),
        })
    }

    fn path(&self, kind: RecordKind, id: &str) -> PathBuf {
        self.root.join(kind.dir()).join(format!("{id}.json"))
    }

    fn read(path: &Path) -> Result<StoreRecord, StoreError> {
        let raw = std::fs::read(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&raw).map_err(|source| StoreError::Corrupt {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl Store for FileStore {
    fn put(&self, kind: RecordKind, id: &str, payload: Value) -> Result<StoreRecord, StoreError> {
        check_id(id)?;
        let record = StoreRecord {
            kind,
            id: id.to_string(),
            payload,
            updated_at: Utc::now(),
        };
        let path = self.path(kind, id);
        let tmp = path.with_extension(format!("json.{}.tmp", uuid::Uuid::new_v4().simple()));
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let bytes = serde_json::to_vec_pretty(&record).expect("records serialize");
        let _guard = self.write_lock.lock().expect("store lock poisoned");
        let mut file = std::fs::File::create(&tmp).map_err(io)?;
        file.write_all(&bytes).map_err(io)?;
        file.sync_all().map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        Ok(record)
    }

    fn get(&self, kind: RecordKind, id: &str) -> Result<Option<StoreRecord>, StoreError> {
        check_id(id)?;
        let path = self.path(kind, id);
        if !path.exists() {
            return Ok(None);
        }
        Self::read(&path).map(Some)
    }

    fn list(&self, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        let dir = self.root.join(kind.dir());
        let entries = std::fs::read_dir(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::read(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn exercise(store: &dyn Store) {
        assert!(store.get(RecordKind::Essay, "a").unwrap().is_none());
        store.put(RecordKind::Essay, "a", json!({"v": 1})).unwrap();
        store.put(RecordKind::Essay, "a", json!({"v": 2})).unwrap();
        store.put(RecordKind::Session, "a", json!({"s": true})).unwrap();
        assert_eq!(store.get(RecordKind::Essay, "a").unwrap().unwrap().payload, json!({"v": 2}));
        assert_eq!(store.list(RecordKind::Essay).unwrap().len(), 1);
        assert!(matches!(store.put(RecordKind::Essay, "../x", json!(1)), Err(StoreError::BadId(_))));
    }

    #[test]
    fn memory_store() {
        exercise(&MemoryStore::new());
    }

    #[test]
    fn file_store_persists() {
        let dir = tempfile::tempdir().unwrap();
        exercise(&FileStore::open(dir.path()).unwrap());
        let reopened = FileStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(RecordKind::Essay, "a").unwrap().unwrap().payload, json!({"v": 2}));
    }
}
