//! Size-bounded, least-recently-used on-disk cache of fetched files.
//!
//! Entries handed out as [`Lease`]s are pinned: eviction skips them, so the
//! cache may exceed its bound while large downloads are in flight.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

#[derive(Debug)]
struct Entry {
    path: PathBuf,
    size: u64,
    crc: u32,
    last_used: u64,
    leases: usize,
}

#[derive(Debug, Default)]
struct State {
    entries: HashMap<String, Entry>,
    total: u64,
    tick: u64,
    temp_seq: u64,
}

#[derive(Debug)]
pub struct FileCache {
    dir: PathBuf,
    max_bytes: u64,
    state: Mutex<State>,
}

/// Pinned cache entry; the file stays on disk until every lease is dropped.
#[derive(Debug)]
pub struct Lease {
    cache: Arc<FileCache>,
    key: String,
    pub path: PathBuf,
    pub size: u64,
    /// CRC-32 of the whole file.
    pub crc: u32,
}

impl Drop for Lease {
    fn drop(&mut self) {
        self.cache.release(&self.key);
    }
}

/// Cache key for a URL plus an optional derived-content variant.
pub fn cache_key(url: &str, variant: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update([0u8]);
    hasher.update(variant.as_bytes());
    hex::encode(hasher.finalize())
}

impl FileCache {
    /// Open `dir`, discarding anything a previous process left there.
    pub fn open(dir: &Path, max_bytes: u64) -> io::Result<Arc<Self>> {
        fs::create_dir_all(dir)?;
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_file() {
                fs::remove_file(&path)?;
            }
        }
        Ok(Arc::new(Self {
            dir: dir.to_path_buf(),
            max_bytes,
            state: Mutex::new(State::default()),
        }))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn max_bytes(&self) -> u64 {
        self.max_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.lock().total
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.lock().entries.contains_key(key)
    }

    /// Fresh path inside the cache directory for staging a download.
    pub fn temp_path(&self) -> PathBuf {
        let mut state = self.lock();
        state.temp_seq += 1;
        self.dir.join(format!("incoming-{}.part", state.temp_seq))
    }

    pub fn get(self: &Arc<Self>, key: &str) -> Option<Lease> {
        let mut state = self.lock();
        state.tick += 1;
        let tick = state.tick;
        let entry = state.entries.get_mut(key)?;
        entry.last_used = tick;
        entry.leases += 1;
        Some(Lease {
            cache: Arc::clone(self),
            key: key.to_string(),
            path: entry.path.clone(),
            size: entry.size,
            crc: entry.crc,
        })
    }

    /// Move a staged file into the cache and lease it.
    pub fn insert(self: &Arc<Self>, key: &str, staged: &Path, size: u64, crc: u32) -> io::Result<Lease> {
        let mut state = self.lock();
        if let Some(existing) = state.entries.get(key) {
            if existing.leases > 0 {
                drop(state);
                let _ = fs::remove_file(staged);
                return Ok(self.get(key).expect("leased entry stays cached"));
            }
            let old = state.entries.remove(key).expect("present");
            state.total -= old.size;
        }
        let path = self.dir.join(key);
        fs::rename(staged, &path)?;
        state.tick += 1;
        let tick = state.tick;
        state.entries.insert(
            key.to_string(),
            Entry {
                path: path.clone(),
                size,
                crc,
                last_used: tick,
                leases: 1,
            },
        );
        state.total += size;
        self.evict(&mut state);
        Ok(Lease {
            cache: Arc::clone(self),
            key: key.to_string(),
            path,
            size,
            crc,
        })
    }

    fn release(&self, key: &str) {
        let mut state = self.lock();
        if let Some(entry) = state.entries.get_mut(key) {
            entry.leases = entry.leases.saturating_sub(1);
        }
        self.evict(&mut state);
    }

    fn evict(&self, state: &mut State) {
        while state.total > self.max_bytes {
            let victim = state
                .entries
                .iter()
                .filter(|(_, e)| e.leases == 0)
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            let Some(key) = victim else { return };
            let entry = state.entries.remove(&key).expect("present");
            state.total -= entry.size;
            if let Err(e) = fs::remove_file(&entry.path) {
                tracing::warn!(path = %entry.path.display(), error = %e, "cache eviction");
            }
        }
    }
}
