//! HTTP service over a catalog snapshot directory.

pub mod api;
pub mod cache;
pub mod fetch;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rdcat_core::store::{
    read_access_counts, read_snapshot, read_snapshot_version, write_access_counts, CatalogStore, SnapshotError,
    IMAGES_DIR,
};
use tokio::net::TcpListener;

pub use api::{router, AppState, Overrides};
pub use cache::{FileCache, Lease};
pub use fetch::{FetchError, FetchPolicy, Fetcher};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub snapshot_dir: PathBuf,
    pub policy: FetchPolicy,
    pub overrides: Overrides,
    /// How often the snapshot index is polled for a new version.
    pub reload_interval: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Load the snapshot in `dir` and build the shared state.
pub fn load_state(dir: &Path, policy: FetchPolicy, overrides: Overrides) -> Result<Arc<AppState>, ServeError> {
    policy.check().map_err(ServeError::Config)?;
    if overrides.related_threshold.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
        return Err(ServeError::Config("related threshold must lie in [0, 1]".into()));
    }
    if overrides.related_k == Some(0) {
        return Err(ServeError::Config("related k must be at least 1".into()));
    }
    let snapshot = read_snapshot(dir)?;
    let store = CatalogStore::new(snapshot).map_err(SnapshotError::from)?;
    store.restore_access(&read_access_counts(dir)?);
    let images = dir.join(IMAGES_DIR);
    Ok(Arc::new(AppState {
        store: Arc::new(store),
        fetcher: Arc::new(Fetcher::new(policy)?),
        images_dir: images.is_dir().then_some(images),
        overrides,
    }))
}

/// One reload pass: swap in the directory's snapshot if its version
/// differs from `seen`, and persist access counts when they changed.
/// Returns the on-disk version now current.
pub fn reload_once(
    store: &CatalogStore,
    dir: &Path,
    seen: u64,
    flushed: &mut std::collections::BTreeMap<String, u64>,
) -> Result<u64, SnapshotError> {
    let table = store.access_table();
    if table != *flushed {
        write_access_counts(dir, &table)?;
        *flushed = table;
    }
    let on_disk = read_snapshot_version(dir)?;
    if on_disk == seen {
        return Ok(seen);
    }
    let snapshot = read_snapshot(dir)?;
    let version = store.swap_snapshot(snapshot)?;
    tracing::info!(on_disk, version, "snapshot reloaded");
    Ok(on_disk)
}

/// Poll `dir` forever, swapping in new snapshots.
pub async fn watch_snapshot(store: Arc<CatalogStore>, dir: PathBuf, interval: Duration) {
    let mut seen = read_snapshot_version(&dir).unwrap_or(0);
    let mut flushed = store.access_table();
    let mut ticker = tokio::time::interval(interval);
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let store = Arc::clone(&store);
        let dir = dir.clone();
        let mut table = std::mem::take(&mut flushed);
        let result = tokio::task::spawn_blocking(move || {
            let r = reload_once(&store, &dir, seen, &mut table);
            (r, table)
        })
        .await;
        match result {
            Ok((Ok(v), table)) => {
                seen = v;
                flushed = table;
            }
            Ok((Err(e), table)) => {
                tracing::warn!(error = %e, "snapshot reload skipped");
                flushed = table;
            }
            Err(e) => tracing::error!(error = %e, "reload task failed"),
        }
    }
}

/// Serve until interrupted.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let state = load_state(&config.snapshot_dir, config.policy.clone(), config.overrides.clone())?;
    let listener = TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let watcher = tokio::spawn(watch_snapshot(
        Arc::clone(&state.store),
        config.snapshot_dir.clone(),
        config.reload_interval,
    ));
    let app = router(Arc::clone(&state));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    watcher.abort();
    write_access_counts(&config.snapshot_dir, &state.store.access_table())?;
    Ok(())
}
