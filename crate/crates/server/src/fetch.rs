//! Cache-first retrieval of remote data files under size and time limits.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};

use crate::cache::{cache_key, FileCache, Lease};

#[derive(Debug, Clone, PartialEq)]
pub struct FetchPolicy {
    /// Whole-request limit per file.
    pub timeout: Duration,
    pub max_file_bytes: u64,
    pub max_files: usize,
    pub cache_dir: PathBuf,
    pub cache_max_bytes: u64,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            max_file_bytes: 256 * 1024 * 1024,
            max_files: 200,
            cache_dir: std::env::temp_dir().join("rdcat-cache"),
            cache_max_bytes: 1024 * 1024 * 1024,
        }
    }
}

impl FetchPolicy {
    pub fn check(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if self.max_file_bytes == 0 || self.max_files == 0 || self.cache_max_bytes == 0 {
            return Err("size and count limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("{url}: {reason}")]
    Upstream { url: String, reason: String },
    #[error("{url}: larger than {limit} bytes")]
    TooLarge { url: String, limit: u64 },
    #[error("{url}: unsupported URL scheme")]
    UnsupportedScheme { url: String },
    #[error("{url}: {reason}")]
    Derive { url: String, reason: String },
    #[error("cache: {0}")]
    Cache(#[from] io::Error),
}

impl FetchError {
    pub fn url(&self) -> Option<&str> {
        match self {
            FetchError::Upstream { url, .. }
            | FetchError::TooLarge { url, .. }
            | FetchError::UnsupportedScheme { url }
            | FetchError::Derive { url, .. } => Some(url),
            FetchError::Cache(_) => None,
        }
    }
}

/// Fetches `http(s)://` and `file://` URLs through a shared [`FileCache`].
#[derive(Debug)]
pub struct Fetcher {
    client: reqwest::Client,
    cache: Arc<FileCache>,
    policy: FetchPolicy,
    upstream: AtomicU64,
}

struct Staged {
    path: PathBuf,
    size: u64,
    crc: u32,
}

impl Fetcher {
    pub fn new(policy: FetchPolicy) -> Result<Self, FetchError> {
        policy.check().map_err(|reason| FetchError::Cache(io::Error::new(io::ErrorKind::InvalidInput, reason)))?;
        let cache = FileCache::open(&policy.cache_dir, policy.cache_max_bytes)?;
        let client = reqwest::Client::builder()
            .timeout(policy.timeout)
            .build()
            .map_err(|e| FetchError::Cache(io::Error::other(e)))?;
        Ok(Self {
            client,
            cache,
            policy,
            upstream: AtomicU64::new(0),
        })
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    pub fn cache(&self) -> &Arc<FileCache> {
        &self.cache
    }

    /// Upstream requests issued so far (cache hits excluded).
    pub fn upstream_fetches(&self) -> u64 {
        self.upstream.load(Ordering::Relaxed)
    }

    /// The file at `url`, from cache when present.
    pub async fn fetch(&self, url: &str) -> Result<Lease, FetchError> {
        let key = cache_key(url, "");
        if let Some(lease) = self.cache.get(&key) {
            return Ok(lease);
        }
        self.upstream.fetch_add(1, Ordering::Relaxed);
        let staged = if let Some(path) = url.strip_prefix("file://") {
            self.stage_local(url, Path::new(path)).await
        } else if url.starts_with("http://") || url.starts_with("https://") {
            self.stage_http(url).await
        } else {
            Err(FetchError::UnsupportedScheme { url: url.to_string() })
        }?;
        Ok(self.cache.insert(&key, &staged.path, staged.size, staged.crc)?)
    }

    /// Content derived from the file at `url` by `derive`, cached under
    /// `variant`. The source is held in memory only while deriving.
    pub async fn fetch_derived<F>(&self, url: &str, variant: &str, derive: F) -> Result<Lease, FetchError>
    where
        F: FnOnce(Vec<u8>) -> Result<Vec<u8>, String> + Send + 'static,
    {
        let key = cache_key(url, variant);
        if let Some(lease) = self.cache.get(&key) {
            return Ok(lease);
        }
        let source = self.fetch(url).await?;
        let bytes = tokio::fs::read(&source.path).await?;
        drop(source);
        let derived = tokio::task::spawn_blocking(move || derive(bytes))
            .await
            .map_err(|e| FetchError::Derive { url: url.to_string(), reason: e.to_string() })?
            .map_err(|reason| FetchError::Derive { url: url.to_string(), reason })?;
        let path = self.cache.temp_path();
        tokio::fs::write(&path, &derived).await?;
        Ok(self.cache.insert(&key, &path, derived.len() as u64, crc32fast::hash(&derived))?)
    }

    async fn stage_local(&self, url: &str, path: &Path) -> Result<Staged, FetchError> {
        let upstream = |e: io::Error| FetchError::Upstream { url: url.to_string(), reason: e.to_string() };
        let mut src = tokio::fs::File::open(path).await.map_err(upstream)?;
        let len = src.metadata().await.map_err(upstream)?.len();
        if len > self.policy.max_file_bytes {
            return Err(FetchError::TooLarge { url: url.to_string(), limit: self.policy.max_file_bytes });
        }
        let target = self.cache.temp_path();
        let mut out = tokio::fs::File::create(&target).await?;
        let mut hasher = crc32fast::Hasher::new();
        let mut buf = vec![0u8; 64 * 1024];
        let mut size = 0u64;
        loop {
            let n = src.read(&mut buf).await.map_err(upstream)?;
            if n == 0 {
                break;
            }
            size += n as u64;
            if size > self.policy.max_file_bytes {
                drop(out);
                let _ = tokio::fs::remove_file(&target).await;
                return Err(FetchError::TooLarge { url: url.to_string(), limit: self.policy.max_file_bytes });
            }
            hasher.update(&buf[..n]);
            out.write_all(&buf[..n]).await?;
        }
        out.flush().await?;
        Ok(Staged { path: target, size, crc: hasher.finalize() })
    }

    async fn stage_http(&self, url: &str) -> Result<Staged, FetchError> {
        let upstream = |reason: String| FetchError::Upstream { url: url.to_string(), reason };
        let too_large = || FetchError::TooLarge { url: url.to_string(), limit: self.policy.max_file_bytes };
        let mut response = self.client.get(url).send().await.map_err(|e| upstream(e.to_string()))?;
        if !response.status().is_success() {
            return Err(upstream(format!("status {}", response.status())));
        }
        if response.content_length().is_some_and(|n| n > self.policy.max_file_bytes) {
            return Err(too_large());
        }
        let target = self.cache.temp_path();
        let mut out = tokio::fs::File::create(&target).await?;
        let mut hasher = crc32fast::Hasher::new();
        let mut size = 0u64;
        let result = async {
            while let Some(chunk) = response.chunk().await.map_err(|e| upstream(e.to_string()))? {
                size += chunk.len() as u64;
                if size > self.policy.max_file_bytes {
                    return Err(too_large());
                }
                hasher.update(&chunk);
                out.write_all(&chunk).await?;
            }
            out.flush().await?;
            Ok(())
        }
        .await;
        if let Err(e) = result {
            let _ = tokio::fs::remove_file(&target).await;
            return Err(e);
        }
        Ok(Staged { path: target, size, crc: hasher.finalize() })
    }
}
