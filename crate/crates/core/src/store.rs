//! Versioned catalog snapshots, the in-memory store that publishes them and
//! their on-disk directory form.
//!
//! Directory layout (format 1):
//!
//! ```text
//! index.json            format_version, version, settings, member ids
//! records/<id>.json
//! configs/<id>.json
//! manifests/<id>.txt
//! scores.tsv
//! graph.json
//! images/               served verbatim, never written here
//! access_counts.json    live counters, outside the versioned content
//! ```
//!
//! `index.json` is written last and is the commit point.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::model::DatasetRecord;
use crate::registry::AvailabilityManifest;
use crate::relatedness::{scores_from_tsv, scores_to_tsv, RelatednessScore, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use crate::textnet::{export_graph, import_graph, CooccurrenceGraph};

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";
pub const ACCESS_FILE: &str = "access_counts.json";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSettings {
    pub related_threshold: f64,
    pub related_k: usize,
    /// Preset search chips offered to clients.
    #[serde(default)]
    pub chips: Vec<String>,
}

impl Default for SnapshotSettings {
    fn default() -> Self {
        Self {
            related_threshold: DEFAULT_THRESHOLD,
            related_k: DEFAULT_TOP_K,
            chips: Vec::new(),
        }
    }
}

/// An immutable publication of the whole catalog.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CatalogSnapshot {
    pub version: u64,
    pub records: BTreeMap<String, DatasetRecord>,
    pub configs: BTreeMap<String, DatasetConfig>,
    /// Keyed by config id.
    pub manifests: BTreeMap<String, AvailabilityManifest>,
    /// Sorted by `(dataset_a, dataset_b)`.
    pub scores: Vec<RelatednessScore>,
    pub graph: CooccurrenceGraph,
    pub settings: SnapshotSettings,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntegrityError {
    #[error("record {record} references missing config {config_ref}")]
    DanglingConfig { record: String, config_ref: String },
    #[error("score ({dataset_a}, {dataset_b}) references a missing record")]
    DanglingScore { dataset_a: String, dataset_b: String },
    #[error("manifest {0} has no matching config")]
    DanglingManifest(String),
    #[error("entry keyed {key} carries id {id}")]
    KeyMismatch { key: String, id: String },
}

impl CatalogSnapshot {
    pub fn check(&self) -> Result<(), IntegrityError> {
        for (key, record) in &self.records {
            if *key != record.id {
                return Err(IntegrityError::KeyMismatch { key: key.clone(), id: record.id.clone() });
            }
            if !self.configs.contains_key(&record.config_ref) {
                return Err(IntegrityError::DanglingConfig {
                    record: record.id.clone(),
                    config_ref: record.config_ref.clone(),
                });
            }
        }
        for (key, config) in &self.configs {
            if *key != config.id {
                return Err(IntegrityError::KeyMismatch { key: key.clone(), id: config.id.clone() });
            }
        }
        if let Some(key) = self.manifests.keys().find(|k| !self.configs.contains_key(*k)) {
            return Err(IntegrityError::DanglingManifest(key.clone()));
        }
        for s in &self.scores {
            if !self.records.contains_key(&s.dataset_a) || !self.records.contains_key(&s.dataset_b) {
                return Err(IntegrityError::DanglingScore {
                    dataset_a: s.dataset_a.clone(),
                    dataset_b: s.dataset_b.clone(),
                });
            }
        }
        Ok(())
    }

    /// Config backing a record.
    pub fn config_for(&self, record_id: &str) -> Option<&DatasetConfig> {
        self.records.get(record_id).and_then(|r| self.configs.get(&r.config_ref))
    }

    pub fn manifest_for(&self, record_id: &str) -> Option<&AvailabilityManifest> {
        self.records.get(record_id).and_then(|r| self.manifests.get(&r.config_ref))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dataset {0}")]
pub struct UnknownDataset(pub String);

/// Single-writer, many-reader holder of the current snapshot.
///
/// Readers clone an `Arc` and keep a consistent view for as long as they
/// hold it. Access counts live beside the snapshot, keyed by id, and are
/// added to the record's stored count at read time.
#[derive(Debug)]
pub struct CatalogStore {
    current: RwLock<Arc<CatalogSnapshot>>,
    writer: Mutex<()>,
    access: Mutex<HashMap<String, u64>>,
}

impl CatalogStore {
    pub fn new(initial: CatalogSnapshot) -> Result<Self, IntegrityError> {
        initial.check()?;
        Ok(Self {
            current: RwLock::new(Arc::new(initial)),
            writer: Mutex::new(()),
            access: Mutex::new(HashMap::new()),
        })
    }

    pub fn snapshot(&self) -> Arc<CatalogSnapshot> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version
    }

    /// Publish `new`; its version becomes at least one above the current.
    pub fn swap_snapshot(&self, new: CatalogSnapshot) -> Result<u64, IntegrityError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        self.publish(new)
    }

    /// Insert or replace one record as a new snapshot version.
    pub fn upsert(&self, record: DatasetRecord) -> Result<u64, IntegrityError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (*self.snapshot()).clone();
        next.records.insert(record.id.clone(), record);
        self.publish(next)
    }

    fn publish(&self, mut new: CatalogSnapshot) -> Result<u64, IntegrityError> {
        new.check()?;
        let mut slot = self.current.write().unwrap_or_else(|e| e.into_inner());
        new.version = new.version.max(slot.version + 1);
        let version = new.version;
        *slot = Arc::new(new);
        Ok(version)
    }

    /// Record with the live access count merged in.
    pub fn get(&self, id: &str) -> Option<DatasetRecord> {
        let snapshot = self.snapshot();
        let mut record = snapshot.records.get(id)?.clone();
        record.access_count = self.access_count(&record);
        Some(record)
    }

    pub fn access_count(&self, record: &DatasetRecord) -> u64 {
        let table = self.access.lock().unwrap_or_else(|e| e.into_inner());
        record.access_count + table.get(&record.id).copied().unwrap_or(0)
    }

    /// Increment and return the merged count.
    pub fn record_access(&self, id: &str) -> Result<u64, UnknownDataset> {
        let snapshot = self.snapshot();
        let record = snapshot.records.get(id).ok_or_else(|| UnknownDataset(id.to_string()))?;
        let mut table = self.access.lock().unwrap_or_else(|e| e.into_inner());
        let n = table.entry(id.to_string()).or_insert(0);
        *n += 1;
        Ok(record.access_count + *n)
    }

    /// Increments since startup, including restored ones.
    pub fn access_table(&self) -> BTreeMap<String, u64> {
        let table = self.access.lock().unwrap_or_else(|e| e.into_inner());
        table.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    /// Add previously persisted increments.
    pub fn restore_access(&self, counts: &BTreeMap<String, u64>) {
        let mut table = self.access.lock().unwrap_or_else(|e| e.into_inner());
        for (id, n) in counts {
            *table.entry(id.clone()).or_insert(0) += n;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("unsupported snapshot format {0}")]
    UnsupportedFormat(u32),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    format_version: u32,
    version: u64,
    settings: SnapshotSettings,
    records: Vec<String>,
    configs: Vec<String>,
    manifests: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl ToString) -> SnapshotError {
    SnapshotError::Format { path: path.to_path_buf(), message: message.to_string() }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SnapshotError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("snapshot values serialize");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String, SnapshotError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SnapshotError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| format_err(path, e))
}

/// Remove `*.ext` files in `dir` whose stem is not in `keep`.
fn prune(dir: &Path, ext: &str, keep: &[&String]) -> Result<(), SnapshotError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let stale = path.extension().is_some_and(|e| e == ext)
            && path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|stem| !keep.iter().any(|k| k.as_str() == stem));
        if stale {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

/// Persist `snapshot` into `dir`; files other than the snapshot's own are
/// left alone apart from stale members.
pub fn write_snapshot(dir: &Path, snapshot: &CatalogSnapshot) -> Result<(), SnapshotError> {
    snapshot.check()?;
    let sub = |name: &str| -> Result<PathBuf, SnapshotError> {
        let p = dir.join(name);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
        Ok(p)
    };
    let records_dir = sub("records")?;
    let configs_dir = sub("configs")?;
    let manifests_dir = sub("manifests")?;
    for (id, record) in &snapshot.records {
        write_atomic(&records_dir.join(format!("{id}.json")), to_json(record).as_bytes())?;
    }
    for (id, config) in &snapshot.configs {
        write_atomic(&configs_dir.join(format!("{id}.json")), to_json(config).as_bytes())?;
    }
    for (id, manifest) in &snapshot.manifests {
        write_atomic(&manifests_dir.join(format!("{id}.txt")), manifest.to_text().as_bytes())?;
    }
    write_atomic(&dir.join("scores.tsv"), scores_to_tsv(&snapshot.scores).as_bytes())?;
    write_atomic(&dir.join("graph.json"), export_graph(&snapshot.graph).as_bytes())?;
    let index = Index {
        format_version: FORMAT_VERSION,
        version: snapshot.version,
        settings: snapshot.settings.clone(),
        records: snapshot.records.keys().cloned().collect(),
        configs: snapshot.configs.keys().cloned().collect(),
        manifests: snapshot.manifests.keys().cloned().collect(),
    };
    write_atomic(&dir.join(INDEX_FILE), to_json(&index).as_bytes())?;
    prune(&records_dir, "json", &index.records.iter().collect::<Vec<_>>())?;
    prune(&configs_dir, "json", &index.configs.iter().collect::<Vec<_>>())?;
    prune(&manifests_dir, "txt", &index.manifests.iter().collect::<Vec<_>>())?;
    Ok(())
}

/// Version stamp of the snapshot in `dir`, read from the index alone.
pub fn read_snapshot_version(dir: &Path) -> Result<u64, SnapshotError> {
    let index: Index = read_json(&dir.join(INDEX_FILE))?;
    Ok(index.version)
}

pub fn read_snapshot(dir: &Path) -> Result<CatalogSnapshot, SnapshotError> {
    let index: Index = read_json(&dir.join(INDEX_FILE))?;
    if index.format_version != FORMAT_VERSION {
        return Err(SnapshotError::UnsupportedFormat(index.format_version));
    }
    let mut snapshot = CatalogSnapshot {
        version: index.version,
        settings: index.settings,
        ..Default::default()
    };
    for id in &index.records {
        let record: DatasetRecord = read_json(&dir.join("records").join(format!("{id}.json")))?;
        snapshot.records.insert(id.clone(), record);
    }
    for id in &index.configs {
        let config: DatasetConfig = read_json(&dir.join("configs").join(format!("{id}.json")))?;
        snapshot.configs.insert(id.clone(), config);
    }
    for id in &index.manifests {
        let path = dir.join("manifests").join(format!("{id}.txt"));
        let manifest = AvailabilityManifest::parse(id.clone(), &read_text(&path)?).map_err(|e| format_err(&path, e))?;
        snapshot.manifests.insert(id.clone(), manifest);
    }
    let scores_path = dir.join("scores.tsv");
    snapshot.scores = scores_from_tsv(&read_text(&scores_path)?).map_err(|e| format_err(&scores_path, e))?;
    let graph_path = dir.join("graph.json");
    snapshot.graph = import_graph(&read_text(&graph_path)?).map_err(|e| format_err(&graph_path, e))?;
    snapshot.check()?;
    Ok(snapshot)
}

pub fn read_access_counts(dir: &Path) -> Result<BTreeMap<String, u64>, SnapshotError> {
    let path = dir.join(ACCESS_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    read_json(&path)
}

pub fn write_access_counts(dir: &Path, counts: &BTreeMap<String, u64>) -> Result<(), SnapshotError> {
    write_atomic(&dir.join(ACCESS_FILE), to_json(counts).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{sample_config, sample_record};
    use crate::model::LocalizedText;
    use crate::relatedness::Method;
    use crate::textnet::{build_cooccurrence, RuleTokenizer};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::thread;

    /// Snapshot whose every record carries `stamp` in its title.
    fn stamped(stamp: u64, n: usize) -> CatalogSnapshot {
        let mut s = CatalogSnapshot::default();
        let config = sample_config("cfg");
        s.configs.insert(config.id.clone(), config);
        for i in 0..n {
            let mut r = sample_record(&format!("r{i:03}"));
            r.config_ref = "cfg".into();
            r.title = LocalizedText::en(format!("v{stamp}"));
            s.records.insert(r.id.clone(), r);
        }
        s
    }

    fn fixture() -> CatalogSnapshot {
        let mut s = stamped(1, 3);
        s.version = 4;
        s.settings.related_threshold = 0.5;
        s.settings.chips = vec!["Aurora".into(), "Magnetic field".into()];
        let manifest = AvailabilityManifest::parse("cfg", "2020-01-01\n2020-01-02\n").unwrap();
        s.manifests.insert("cfg".into(), manifest);
        s.scores = vec![
            RelatednessScore {
                dataset_a: "r000".into(),
                dataset_b: "r001".into(),
                score: 0.9,
                method: Method::Pearson,
                detail: -0.9,
            },
            RelatednessScore {
                dataset_a: "r001".into(),
                dataset_b: "r002".into(),
                score: 1.0 / 3.0,
                method: Method::Emd,
                detail: 2.0,
            },
        ];
        let titles = ["Syowa magnetometer", "Syowa riometer", "Syowa magnetometer data"];
        s.graph = build_cooccurrence(&titles, &RuleTokenizer::builtin(), 1, 1);
        s
    }

    #[test]
    fn integrity_errors() {
        let mut s = stamped(1, 2);
        s.records.get_mut("r000").unwrap().config_ref = "missing".into();
        assert_eq!(
            s.check(),
            Err(IntegrityError::DanglingConfig { record: "r000".into(), config_ref: "missing".into() })
        );
        let mut s = stamped(1, 2);
        s.scores.push(RelatednessScore {
            dataset_a: "r000".into(),
            dataset_b: "ghost".into(),
            score: 1.0,
            method: Method::Pearson,
            detail: 1.0,
        });
        assert!(matches!(s.check(), Err(IntegrityError::DanglingScore { .. })));
        let mut s = stamped(1, 1);
        s.manifests.insert("other".into(), AvailabilityManifest::parse("other", "").unwrap());
        assert_eq!(s.check(), Err(IntegrityError::DanglingManifest("other".into())));
        let mut s = stamped(1, 1);
        let r = s.records.remove("r000").unwrap();
        s.records.insert("elsewhere".into(), r);
        assert!(matches!(s.check(), Err(IntegrityError::KeyMismatch { .. })));
    }

    #[test]
    fn swap_rejects_dangling_and_keeps_old() {
        let store = CatalogStore::new(stamped(1, 2)).unwrap();
        let mut bad = stamped(2, 2);
        bad.configs.clear();
        assert!(matches!(store.swap_snapshot(bad), Err(IntegrityError::DanglingConfig { .. })));
        assert_eq!(store.get("r000").unwrap().title.en, "v1");
    }

    #[test]
    fn versions_strictly_increase() {
        let store = CatalogStore::new(stamped(1, 1)).unwrap();
        let v1 = store.swap_snapshot(stamped(2, 1)).unwrap();
        let v2 = store.swap_snapshot(stamped(3, 1)).unwrap();
        assert!(v1 > 0 && v2 > v1);
        let mut ahead = stamped(4, 1);
        ahead.version = 50;
        assert_eq!(store.swap_snapshot(ahead).unwrap(), 50);
        assert_eq!(store.swap_snapshot(stamped(5, 1)).unwrap(), 51);
    }

    #[test]
    fn access_counts_survive_swaps() {
        let store = CatalogStore::new(stamped(1, 2)).unwrap();
        for expected in 1..=3 {
            assert_eq!(store.record_access("r000").unwrap(), expected);
        }
        assert_eq!(store.record_access("nope"), Err(UnknownDataset("nope".into())));
        store.swap_snapshot(stamped(2, 2)).unwrap();
        assert_eq!(store.get("r000").unwrap().access_count, 3);
        assert_eq!(store.get("r001").unwrap().access_count, 0);
    }

    #[test]
    fn concurrent_increments_are_exact() {
        let store = CatalogStore::new(stamped(1, 1)).unwrap();
        thread::scope(|scope| {
            for _ in 0..10 {
                scope.spawn(|| {
                    for _ in 0..10 {
                        store.record_access("r000").unwrap();
                    }
                });
            }
        });
        assert_eq!(store.get("r000").unwrap().access_count, 100);
    }

    #[test]
    fn readers_never_observe_mixed_versions() {
        let store = CatalogStore::new(stamped(0, 200)).unwrap();
        let done = AtomicBool::new(false);
        thread::scope(|scope| {
            let readers: Vec<_> = (0..4)
                .map(|_| {
                    scope.spawn(|| {
                        let mut seen = 0u64;
                        while !done.load(Ordering::Relaxed) {
                            let snap = store.snapshot();
                            let first = snap.records.values().next().unwrap().title.en.clone();
                            for r in snap.records.values() {
                                assert_eq!(r.title.en, first);
                            }
                            seen += 1;
                        }
                        seen
                    })
                })
                .collect();
            for stamp in 1..=200 {
                store.swap_snapshot(stamped(stamp, 200)).unwrap();
            }
            done.store(true, Ordering::Relaxed);
            for r in readers {
                assert!(r.join().unwrap() > 0);
            }
        });
        assert_eq!(store.get("r000").unwrap().title.en, "v200");
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let snap = fixture();
        write_snapshot(dir.path(), &snap).unwrap();
        assert_eq!(read_snapshot(dir.path()).unwrap(), snap);
        assert_eq!(read_snapshot_version(dir.path()).unwrap(), 4);
    }

    #[test]
    fn rewrite_prunes_stale_members_and_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(dir.path(), &stamped(1, 3)).unwrap();
        let smaller = stamped(1, 1);
        write_snapshot(dir.path(), &smaller).unwrap();
        assert!(!dir.path().join("records/r002.json").exists());
        assert_eq!(read_snapshot(dir.path()).unwrap(), smaller);
        let bytes = fs::read(dir.path().join("records/r000.json")).unwrap();
        write_snapshot(dir.path(), &smaller).unwrap();
        assert_eq!(fs::read(dir.path().join("records/r000.json")).unwrap(), bytes);
    }

    #[test]
    fn unsupported_format_and_missing_index() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_snapshot(dir.path()), Err(SnapshotError::Io { .. })));
        write_snapshot(dir.path(), &stamped(1, 1)).unwrap();
        let index = dir.path().join(INDEX_FILE);
        let text = fs::read_to_string(&index).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        fs::write(&index, text).unwrap();
        assert!(matches!(read_snapshot(dir.path()), Err(SnapshotError::UnsupportedFormat(9))));
    }

    #[test]
    fn access_counts_persist() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_access_counts(dir.path()).unwrap().is_empty());
        let counts = BTreeMap::from([("a".to_string(), 3u64)]);
        write_access_counts(dir.path(), &counts).unwrap();
        assert_eq!(read_access_counts(dir.path()).unwrap(), counts);
        let store = CatalogStore::new(stamped(1, 1)).unwrap();
        store.restore_access(&BTreeMap::from([("r000".to_string(), 7u64)]));
        assert_eq!(store.record_access("r000").unwrap(), 8);
    }

    proptest! {
        #[test]
        fn upsert_then_get_round_trips(
            title in "[A-Za-z ]{1,30}",
            keywords in prop::collection::vec("[a-z]{1,8}", 0..4),
            access in 0u64..1000,
        ) {
            let store = CatalogStore::new(stamped(1, 2)).unwrap();
            let mut r = sample_record("fresh");
            r.config_ref = "cfg".into();
            r.title = LocalizedText::en(title);
            r.keywords = keywords;
            r.access_count = access;
            store.upsert(r.clone()).unwrap();
            prop_assert_eq!(store.get("fresh"), Some(r));
        }
    }
}
