//! Key-value storage behind which freeze state, review records and
//! commitments persist.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;

/// Minimal string key-value store. Implementations must give
/// read-your-writes consistency within one instance.
pub trait StorageAdapter: Send + Sync {
    fn get(&self, key: &str) -> io::Result<Option<String>>;
    fn set(&self, key: &str, value: &str) -> io::Result<()>;
    fn remove(&self, key: &str) -> io::Result<()>;
    /// Keys starting with `prefix`, sorted.
    fn keys_with_prefix(&self, prefix: &str) -> io::Result<Vec<String>>;
}

#[derive(Debug, Default)]
pub struct InMemoryStorage {
    map: RwLock<BTreeMap<String, String>>,
}

impl InMemoryStorage {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StorageAdapter for InMemoryStorage {
    fn get(&self, key: &str) -> io::Result<Option<String>> {
        Ok(self.map.read().get(key).cloned())
    }

    fn set(&self, key: &str, value: &str) -> io::Result<()> {
        self.map.write().insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn remove(&self, key: &str) -> io::Result<()> {
        self.map.write().remove(key);
        Ok(())
    }

    fn keys_with_prefix(&self, prefix: &str) -> io::Result<Vec<String>> {
        Ok(self
            .map
            .read()
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect())
    }
}

/// One file per key under a directory. Keys are hex-encoded into file names
/// so that any key string is a valid path component. Writes go through a
/// temporary file and rename.
#[derive(Debug)]
pub struct FileStorage {
    dir: PathBuf,
    lock: RwLock<()>,
}

impl FileStorage {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            lock: RwLock::new(()),
        })
    }

    /// Opens the directory named by `AESP_STORAGE_DIR`, if set.
    pub fn from_env() -> io::Result<Option<Self>> {
        match std::env::var_os("AESP_STORAGE_DIR") {
            Some(dir) => Self::open(dir).map(Some),
            None => Ok(None),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", hex::encode(key)))
    }
}

impl StorageAdapter for FileStorage {
    fn get(&self, key: &str) -> io::Result<Option<String>> {
        let _g = self.lock.read();
        match fs::read_to_string(self.path_for(key)) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn set(&self, key: &str, value: &str) -> io::Result<()> {
        let _g = self.lock.write();
        let path = self.path_for(key);
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(value.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)
    }

    fn remove(&self, key: &str) -> io::Result<()> {
        let _g = self.lock.write();
        match fs::remove_file(self.path_for(key)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    fn keys_with_prefix(&self, prefix: &str) -> io::Result<Vec<String>> {
        let _g = self.lock.read();
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            let Some(key) = hex::decode(stem).ok().and_then(|b| String::from_utf8(b).ok()) else {
                continue;
            };
            if key.starts_with(prefix) {
                out.push(key);
            }
        }
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exercise(s: &dyn StorageAdapter) {
        assert_eq!(s.get("aesp:x").unwrap(), None);
        s.set("aesp:x", "1").unwrap();
        s.set("aesp:y/z", "2").unwrap();
        s.set("other", "3").unwrap();
        assert_eq!(s.get("aesp:x").unwrap().as_deref(), Some("1"));
        s.set("aesp:x", "4").unwrap();
        assert_eq!(s.get("aesp:x").unwrap().as_deref(), Some("4"));
        assert_eq!(s.keys_with_prefix("aesp:").unwrap(), vec!["aesp:x", "aesp:y/z"]);
        s.remove("aesp:x").unwrap();
        s.remove("aesp:x").unwrap();
        assert_eq!(s.get("aesp:x").unwrap(), None);
    }

    #[test]
    fn in_memory() {
        exercise(&InMemoryStorage::new());
    }

    #[test]
    fn file_backed_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        exercise(&FileStorage::open(dir.path()).unwrap());
        let reopened = FileStorage::open(dir.path()).unwrap();
        assert_eq!(reopened.get("aesp:y/z").unwrap().as_deref(), Some("2"));
    }
}
