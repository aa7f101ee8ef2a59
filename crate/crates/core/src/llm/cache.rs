//! Content-addressed response cache and the remote-call audit log.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

/// Hex SHA-256 of provider kind, model name and prompt text.
pub fn cache_key(provider_kind: &str, model: &str, full_text: &str) -> String {
    let mut h = Sha256::new();
    for part in [provider_kind, model, full_text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

/// One file per key; the file holds the raw completion bytes.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    pub fn get(&self, key: &str) -> io::Result<Option<String>> {
        match fs::read(self.path_for(key)) {
            Ok(bytes) => Ok(Some(String::from_utf8_lossy(&bytes).into_owned())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes to a unique temporary file, then renames over the key. Concurrent
    /// writers of the same key each land a complete file.
    pub fn put(&self, key: &str, completion: &str) -> io::Result<()> {
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self
            .dir
            .join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(completion.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path_for(key))
    }
}

/// Append-only log of fresh remote calls: hash, unix millis, prompt bytes, completion bytes.
#[derive(Debug)]
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        if let Some(parent) = path.as_ref().parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, key: &str, prompt_bytes: usize, completion_bytes: usize) -> io::Result<()> {
        let millis = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let mut f = self.file.lock().expect("audit log poisoned");
        writeln!(f, "{key}\t{millis}\t{prompt_bytes}\t{completion_bytes}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = cache_key("offline", "m", "prompt");
        assert_eq!(cache.get(&key).unwrap(), None);
        cache.put(&key, "answer").unwrap();
        assert_eq!(cache.get(&key).unwrap().as_deref(), Some("answer"));
        assert_eq!(fs::read(cache.path_for(&key)).unwrap(), b"answer");
        // no temporary files left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn keys_separate_fields() {
        assert_ne!(cache_key("a", "bc", "d"), cache_key("ab", "c", "d"));
        assert_ne!(cache_key("offline", "m", "x"), cache_key("remote", "m", "x"));
        assert_eq!(cache_key("offline", "m", "x").len(), 64);
    }

    #[test]
    fn no_collisions_over_generated_prompts() {
        let mut seen = HashSet::new();
        for i in 0..5000 {
            let prompt = format!("prompt {i} {}", "x".repeat(i % 17));
            assert!(seen.insert(cache_key("offline", "m", &prompt)));
        }
    }

    #[test]
    fn concurrent_writers_of_one_key() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| cache.put("k", "same bytes").unwrap());
            }
        });
        assert_eq!(cache.get("k").unwrap().as_deref(), Some("same bytes"));
    }
}
