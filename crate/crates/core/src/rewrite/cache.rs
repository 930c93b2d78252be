//! Append-only JSONL ledger of generations, keyed by content hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub strategy: String,
    pub context_hash: String,
    pub raw: String,
    #[serde(rename = "final")]
    pub final_text: String,
    pub timestamp: u64,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Cache key over (strategy, template hash, context hash, decoding params).
pub fn cache_key(strategy: &str, template_hash: &str, context_hash: &str, params: &str) -> String {
    sha256_hex(format!("{strategy}\n{template_hash}\n{context_hash}\n{params}").as_bytes())
}

/// In-memory view of the ledger. Each insert appends exactly one line.
#[derive(Debug)]
pub struct RewriteCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CacheEntry>>,
    file: Option<Mutex<File>>,
}

impl RewriteCache {
    /// A cache that lives only for the process.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
            file: None,
        }
    }

    /// Opens (or creates) a ledger. A torn final line from an interrupted
    /// run is skipped with a warning; the first occurrence of a key wins.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.entry(e.key.clone()).or_insert(e);
                    }
                    Err(err) => log::warn!(
                        "{}:{}: skipping unreadable cache line ({err})",
                        path.display(),
                        i + 1
                    ),
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        // Terminate a torn last line so new records start cleanly.
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len > 0 {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.last() != Some(&b'\n') {
                file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(Self {
            path: Some(path.to_owned()),
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.lock().unwrap().contains_key(key)
    }

    /// Records an entry. Existing keys are left untouched.
    pub fn insert(
        &self,
        key: String,
        strategy: &str,
        context_hash: String,
        raw: String,
        final_text: String,
    ) -> Result<CacheEntry> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(existing) = entries.get(&key) {
            return Ok(existing.clone());
        }
        let entry = CacheEntry {
            key: key.clone(),
            strategy: strategy.to_owned(),
            context_hash,
            raw,
            final_text,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            let mut f = file.lock().unwrap();
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| Error::IoContext {
                    context: "appending to rewrite cache".into(),
                    source: e,
                })?;
        }
        entries.insert(key, entry.clone());
        Ok(entry)
    }
}
