//! Stub upstream file server, fixture snapshot and app launcher.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use chrono::{TimeZone, Utc};
use rdcat_core::config::load_dataset_config;
use rdcat_core::model::{DataKind, DatasetRecord, LocalizedText, SourceSchema};
use rdcat_core::registry::AvailabilityManifest;
use rdcat_core::relatedness::{Method, RelatednessScore};
use rdcat_core::store::{write_snapshot, CatalogSnapshot, SnapshotSettings};
use rdcat_core::textnet::{build_cooccurrence, RuleTokenizer};
use rdcat_server::{load_state, router, AppState, FetchPolicy, Overrides};
use tokio::net::TcpListener;

pub fn netcdf_fixture(name: &str) -> Vec<u8> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/netcdf");
    fs::read(dir.join(name)).unwrap()
}

/// Serves fixed bodies by path and counts requests.
#[derive(Clone)]
pub struct Stub {
    pub base: String,
    hits: Arc<Mutex<HashMap<String, usize>>>,
    total: Arc<AtomicUsize>,
}

impl Stub {
    pub fn total_hits(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub fn hits(&self, path: &str) -> usize {
        self.hits.lock().unwrap().get(path).copied().unwrap_or(0)
    }
}

pub async fn start_stub(files: HashMap<String, Bytes>) -> Stub {
    let hits: Arc<Mutex<HashMap<String, usize>>> = Arc::default();
    let total = Arc::new(AtomicUsize::new(0));
    let files = Arc::new(files);
    let (h, t) = (Arc::clone(&hits), Arc::clone(&total));
    let app = Router::new().fallback(move |uri: Uri| {
        let files = Arc::clone(&files);
        let (hits, total) = (Arc::clone(&h), Arc::clone(&t));
        async move {
            total.fetch_add(1, Ordering::SeqCst);
            *hits.lock().unwrap().entry(uri.path().to_string()).or_insert(0) += 1;
            match files.get(uri.path()) {
                Some(bytes) => Response::new(Body::from(bytes.clone())),
                None => StatusCode::NOT_FOUND.into_response(),
            }
        }
    });
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Stub { base, hits, total }
}

pub fn default_stub_files() -> HashMap<String, Bytes> {
    let mut files = HashMap::new();
    for day in ["20200101", "20200102"] {
        files.insert(format!("/mag/mag_{day}.nc"), Bytes::from(netcdf_fixture(&format!("mag_{day}.nc"))));
        files.insert(format!("/rio/rio_{day}.nc"), Bytes::from(netcdf_fixture(&format!("rio_{day}.nc"))));
    }
    files.insert("/broken/broken_20200101.nc".into(), Bytes::from_static(b"not a netcdf file"));
    files.insert("/specimen/penguin.jpg".into(), Bytes::from_static(b"\xff\xd8\xffjpeg bytes"));
    files
}

pub fn record(id: &str, config: &str, title: &str, kind: DataKind, keywords: &[&str]) -> DatasetRecord {
    DatasetRecord {
        id: id.into(),
        source_id: format!("spase://Test/NumericalData/{id}"),
        source_schema: SourceSchema::SpaseIugonet,
        title: LocalizedText::en(title),
        snippet: LocalizedText::en(format!("{title} snippet")),
        description: LocalizedText::en(format!("{title} description")),
        discipline: vec!["space and upper atmosphere".into()],
        data_kind: kind,
        keywords: keywords.iter().map(|s| s.to_string()).collect(),
        site: None,
        temporal_coverage: None,
        contacts: Vec::new(),
        thumbnail: format!("images/{id}.png"),
        metadata_display: vec![("Resource ID".into(), format!("spase://Test/NumericalData/{id}")), ("Cadence".into(), "PT1H".into())],
        access_count: 0,
        config_ref: config.into(),
    }
}

/// Catalog pointing at `base`:
/// - `syowa-magnetometer`: daily NetCDF, ASCII enabled, manifest Jan 1, 2, 5
/// - `syowa-riometer`: daily NetCDF, ASCII disabled
/// - `broken-files`: daily, upstream file is not NetCDF
/// - `penguin-specimen`: static photo dataset
/// - `hidden-dataset`: downloads and visuals disabled
pub fn fixture_snapshot(base: &str) -> CatalogSnapshot {
    let mut snap = CatalogSnapshot { version: 1, ..Default::default() };
    let configs = [
        (
            "mag",
            format!(
                "data_url_template: {base}/mag/mag_%YYYY%mm%dd.nc\nvisual_url_template: {base}/plots/mag_%YYYY%mm%dd.png\ngranularity: daily\nformat: netcdf\nconversion_enabled: true\nscore_variable: h_component\n"
            ),
        ),
        (
            "rio",
            format!("data_url_template: {base}/rio/rio_%YYYY%mm%dd.nc\ngranularity: daily\nformat: netcdf\nscore_variable: cna\n"),
        ),
        (
            "broken",
            format!("data_url_template: {base}/broken/broken_%YYYY%mm%dd.nc\ngranularity: daily\nformat: netcdf\nconversion_enabled: true\n"),
        ),
        (
            "penguin",
            format!("data_url_template: {base}/specimen/penguin.jpg\ngranularity: static\nstatic_visuals:\n  - images/penguin-a.jpg\n  - images/penguin-b.jpg\n"),
        ),
        (
            "hidden",
            format!("data_url_template: {base}/hidden/h_%YYYY.nc\ngranularity: monthly\ndownload_enabled: false\nshow_visualized: false\n"),
        ),
    ];
    for (id, yaml) in configs {
        let config = load_dataset_config(&yaml, id).unwrap();
        snap.configs.insert(id.into(), config);
    }
    let day = |d: u32| Utc.with_ymd_and_hms(2020, 1, d, 0, 0, 0).unwrap();
    snap.manifests.insert("mag".into(), AvailabilityManifest::new("mag", vec![day(1), day(2), day(5)]));
    snap.manifests.insert("rio".into(), AvailabilityManifest::new("rio", vec![day(1), day(2)]));
    snap.manifests.insert("broken".into(), AvailabilityManifest::new("broken", vec![day(1)]));
    let records = [
        record("syowa-magnetometer", "mag", "Fluxgate magnetometer at Syowa Station", DataKind::TimeSeries, &["Aurora", "magnetometer"]),
        record("syowa-riometer", "rio", "Imaging riometer at Syowa Station", DataKind::TimeSeries, &["Aurora", "riometer"]),
        record("broken-files", "broken", "Broken magnetometer files", DataKind::TimeSeries, &["magnetometer"]),
        record("penguin-specimen", "penguin", "Adelie penguin specimen", DataKind::Specimen, &["penguin"]),
        record("hidden-dataset", "hidden", "Hidden monthly dataset", DataKind::Other, &[]),
    ];
    for mut r in records {
        if r.id == "syowa-magnetometer" {
            r.title = r.title.with_ja("昭和基地 磁力計");
        }
        snap.records.insert(r.id.clone(), r);
    }
    snap.scores = vec![
        score("broken-files", "syowa-magnetometer", 0.72),
        score("broken-files", "syowa-riometer", 0.5),
        score("syowa-magnetometer", "syowa-riometer", 0.95),
    ];
    let titles: Vec<&str> = snap.records.values().map(|r| r.title.en.as_str()).collect();
    snap.graph = build_cooccurrence(&titles, &RuleTokenizer::builtin(), 2, 2);
    snap.settings = SnapshotSettings { related_threshold: 0.7, related_k: 10, chips: vec!["Aurora".into(), "penguin".into()] };
    snap.check().unwrap();
    snap
}

pub fn score(a: &str, b: &str, s: f64) -> RelatednessScore {
    RelatednessScore { dataset_a: a.into(), dataset_b: b.into(), score: s, method: Method::Pearson, detail: s }
}

pub struct App {
    pub base: String,
    pub state: Arc<AppState>,
    pub dir: tempfile::TempDir,
    pub client: reqwest::Client,
}

impl App {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).send().await.unwrap()
    }

    pub async fn json(&self, path: &str) -> (StatusCode, serde_json::Value) {
        let resp = self.get(path).await;
        let status = StatusCode::from_u16(resp.status().as_u16()).unwrap();
        (status, serde_json::from_slice(&resp.bytes().await.unwrap()).unwrap())
    }

    pub fn snapshot_dir(&self) -> PathBuf {
        self.dir.path().join("snapshot")
    }
}

pub fn policy(dir: &Path) -> FetchPolicy {
    FetchPolicy { cache_dir: dir.join("cache"), ..FetchPolicy::default() }
}

pub async fn start_app_with(snapshot: &CatalogSnapshot, policy_fn: impl FnOnce(&Path) -> FetchPolicy, overrides: Overrides) -> App {
    let dir = tempfile::tempdir().unwrap();
    let snap_dir = dir.path().join("snapshot");
    write_snapshot(&snap_dir, snapshot).unwrap();
    let images = snap_dir.join("images");
    fs::create_dir_all(&images).unwrap();
    fs::write(images.join("syowa-magnetometer.png"), b"\x89PNG\r\n\x1a\nfake").unwrap();
    fs::write(images.join("penguin-a.jpg"), b"\xff\xd8\xffphoto").unwrap();
    let state = load_state(&snap_dir, policy_fn(dir.path()), overrides).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(Arc::clone(&state));
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    App { base, state, dir, client: reqwest::Client::new() }
}

pub async fn start_app(snapshot: &CatalogSnapshot) -> App {
    start_app_with(snapshot, policy, Overrides::default()).await
}

/// Members of a zip archive, read with an independent implementation.
pub fn unzip(bytes: &[u8]) -> BTreeMap<String, Vec<u8>> {
    use std::io::Read;
    let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes)).unwrap();
    let mut out = BTreeMap::new();
    for i in 0..archive.len() {
        let mut file = archive.by_index(i).unwrap();
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).unwrap();
        out.insert(file.name().to_string(), buf);
    }
    out
}

pub fn golden_ascii(name: &str) -> Vec<u8> {
    netcdf_fixture(name)
}
