//! Object store abstraction for engine artifacts.
//!
//! Keys are immutable once written: a second put with identical bytes is an
//! idempotent success, a second put with different bytes is refused. That
//! makes publish retries safe without any read-modify-write protocol.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("object {0} not found")]
    NotFound(String),
    #[error("object {0} already exists with different content")]
    ImmutabilityViolation(String),
    #[error("bad object key {0}")]
    BadKey(String),
    #[error("store io error on {key}: {source}")]
    Io {
        key: String,
        #[source]
        source: std::io::Error,
    },
}

pub trait ObjectStore: Send + Sync {
    fn put(&self, key: &str, bytes: &[u8]) -> Result<(), StoreError>;
    fn get(&self, key: &str) -> Result<Vec<u8>, StoreError>;
    fn exists(&self, key: &str) -> Result<bool, StoreError>;
}

/// Store backed by a local directory; keys map to relative paths.
pub struct DirectoryStore {
    root: PathBuf,
    // Serializes put's check-then-write so concurrent publishers in one
    // process cannot race past the immutability check.
    write_lock: Mutex<()>,
}

impl DirectoryStore {
    pub fn new(root: &Path) -> Self {
        DirectoryStore {
            root: root.to_path_buf(),
            write_lock: Mutex::new(()),
        }
    }

    fn resolve(&self, key: &str) -> Result<PathBuf, StoreError> {
        if key.is_empty()
            || key.starts_with('/')
            || key.split('/').any(|part| part.is_empty() || part == "." || part == "..")
        {
            return Err(StoreError::BadKey(key.to_string()));
        }
        Ok(self.root.join(key))
    }
}

impl ObjectStore for DirectoryStore {
    fn put(&self, key: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let path = self.resolve(key)?;
        let io = |source| StoreError::Io {
            key: key.to_string(),
            source,
        };
        let _guard = self.write_lock.lock().unwrap();
        match std::fs::read(&path) {
            Ok(existing) if existing == bytes => return Ok(()),
            Ok(_) => return Err(StoreError::ImmutabilityViolation(key.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io(e)),
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("tmp-put");
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.resolve(key)?;
        match std::fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StoreError::NotFound(key.to_string()))
            }
            Err(source) => Err(StoreError::Io {
                key: key.to_string(),
                source,
            }),
        }
    }

    fn exists(&self, key: &str) -> Result<bool, StoreError> {
        let path = self.resolve(key)?;
        Ok(path.exists())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_and_immutability() {
        let dir = tempfile::tempdir().unwrap();
        let store = DirectoryStore::new(dir.path());
        store.put("engines/v1.fse", b"abc").unwrap();
        assert_eq!(store.get("engines/v1.fse").unwrap(), b"abc");
        assert!(store.exists("engines/v1.fse").unwrap());
        assert!(!store.exists("engines/v2.fse").unwrap());

        // Same bytes: idempotent. Different bytes: refused.
        store.put("engines/v1.fse", b"abc").unwrap();
        assert!(matches!(
            store.put("engines/v1.fse", b"xyz"),
            Err(StoreError::ImmutabilityViolation(_))
        ));
        assert!(matches!(
            store.get("engines/missing.fse"),
            Err(StoreError::NotFound(_))
        ));
    }

    #[test]
    fn rejects_escaping_keys() {
        let dir = tempfile::tempdir().unwrap();
        let store = DirectoryStore::new(dir.path());
        for key in ["../x", "/abs", "a//b", "a/./b", ""] {
            assert!(matches!(store.put(key, b"x"), Err(StoreError::BadKey(_))), "{key}");
        }
    }
}
