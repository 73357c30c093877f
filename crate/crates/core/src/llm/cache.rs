use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::LlmError;

const CACHE_FILE: &str = "llm_cache.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub cache_key: String,
    pub attempt: u32,
    pub backend: String,
    pub response: String,
}

/// Append-only json-lines response cache.
///
/// Readers share an in-memory index; writers are serialized through the file lock.
/// The first entry stored for a `(cache_key, attempt)` wins.
#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    index: RwLock<HashMap<(String, u32), CachedResponse>>,
    writer: Mutex<File>,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(CACHE_FILE);
        let mut index = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from an interrupted write is skipped.
                let Ok(entry) = serde_json::from_str::<CachedResponse>(&line) else {
                    log::warn!("skipping unreadable cache line in {}", path.display());
                    continue;
                };
                index
                    .entry((entry.cache_key.clone(), entry.attempt))
                    .or_insert(entry);
            }
        }
        let mut writer = OpenOptions::new().create(true).append(true).open(&path)?;
        let torn = fs::read(&path)?.last().is_some_and(|b| *b != b'\n');
        if torn {
            writer.write_all(b"\n")?;
        }
        Ok(Self {
            path,
            index: RwLock::new(index),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, cache_key: &str, attempt: u32) -> Option<CachedResponse> {
        self.index
            .read()
            .unwrap()
            .get(&(cache_key.to_owned(), attempt))
            .cloned()
    }

    pub fn put(&self, cache_key: &str, attempt: u32, backend: &str, response: &str) -> Result<(), LlmError> {
        let entry = CachedResponse {
            cache_key: cache_key.to_owned(),
            attempt,
            backend: backend.to_owned(),
            response: response.to_owned(),
        };
        let mut writer = self.writer.lock().unwrap();
        {
            let mut index = self.index.write().unwrap();
            if index.contains_key(&(entry.cache_key.clone(), attempt)) {
                return Ok(());
            }
            index.insert((entry.cache_key.clone(), attempt), entry.clone());
        }
        let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
        line.push('\n');
        writer.write_all(line.as_bytes())?;
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_write_wins_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.put("k", 0, "script", "one").unwrap();
        cache.put("k", 0, "script", "two").unwrap();
        assert_eq!(cache.get("k", 0).unwrap().response, "one");
        assert!(cache.get("k", 1).is_none());
        drop(cache);
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get("k", 0).unwrap().response, "one");
    }

    #[test]
    fn torn_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(CACHE_FILE),
            "{\"cache_key\":\"a\",\"attempt\":0,\"backend\":\"b\",\"response\":\"r\"}\n{\"cache_k",
        )
        .unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 1);
        cache.put("c", 0, "b", "r2").unwrap();
        drop(cache);
        assert_eq!(ResponseCache::open(dir.path()).unwrap().len(), 2);
    }
}
