//! `/api` routes. Every handler reads exactly one snapshot.

use std::collections::HashMap;
use std::fmt::Display;
use std::io;
use std::path::{Component, Path as FsPath, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use serde_json::{json, Value};
use tokio::io::AsyncReadExt;
use tokio::sync::mpsc;
use tokio_stream::wrappers::ReceiverStream;

use rdcat_core::config::{DataFormat, Granularity};
use rdcat_core::convert::{read_netcdf_classic, to_ascii, AsciiOptions};
use rdcat_core::model::{DatasetRecord, Lang};
use rdcat_core::query::{search, Combine, SearchQuery, SortOrder};
use rdcat_core::registry::{
    available_dates, display_name_for, parse_timestamp, resolve_range, resolve_visuals, static_entry, FileEntry,
    RegistryError, ZipStreamWriter,
};
use rdcat_core::relatedness::{top_related, RelatednessError};
use rdcat_core::store::{CatalogSnapshot, CatalogStore};
use rdcat_core::textnet::export_graph;

use crate::cache::Lease;
use crate::fetch::{FetchError, Fetcher};

pub const DEFAULT_PAGE_SIZE: usize = 24;
pub const VERSION_HEADER: &str = "x-snapshot-version";
const CHUNK_BYTES: usize = 64 * 1024;
/// Seeds stay below 2^53 so clients using binary64 numbers echo them exactly.
const SEED_LIMIT: u64 = 1 << 53;

/// Deployment-time values that take precedence over snapshot settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub chips: Option<Vec<String>>,
    pub related_threshold: Option<f64>,
    pub related_k: Option<usize>,
}

#[derive(Debug)]
pub struct AppState {
    pub store: Arc<CatalogStore>,
    pub fetcher: Arc<Fetcher>,
    /// Directory behind `/api/images`.
    pub images_dir: Option<PathBuf>,
    pub overrides: Overrides,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/datasets", get(list_datasets))
        .route("/api/datasets/{id}", get(get_dataset))
        .route("/api/datasets/{id}/available-dates", get(get_available_dates))
        .route("/api/datasets/{id}/download", get(download))
        .route("/api/datasets/{id}/related", get(related))
        .route("/api/datasets/{id}/visuals", get(visuals))
        .route("/api/network", get(network))
        .route("/api/chips", get(chips))
        .route("/api/images/{*path}", get(image))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn unknown(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownDataset", format!("unknown dataset {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type Params = Query<HashMap<String, String>>;
type ApiResult<T> = Result<T, ApiError>;

fn param<T: FromStr>(p: &HashMap<String, String>, name: &str) -> ApiResult<Option<T>>
where
    T::Err: Display,
{
    match p.get(name).map(|v| v.trim()).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| ApiError::bad_request("InvalidParameter", format!("{name}={v:?}: {e}"))),
    }
}

fn required<T: FromStr>(p: &HashMap<String, String>, name: &str) -> ApiResult<T>
where
    T::Err: Display,
{
    param(p, name)?.ok_or_else(|| ApiError::bad_request("MissingParameter", format!("{name} is required")))
}

fn lang(p: &HashMap<String, String>) -> ApiResult<Lang> {
    Ok(param(p, "lang")?.unwrap_or_default())
}

/// Date-only upper bounds cover the whole day.
fn time_param(p: &HashMap<String, String>, name: &str, end_of_day: bool) -> ApiResult<Option<DateTime<Utc>>> {
    let Some(raw) = p.get(name).map(|v| v.trim()).filter(|v| !v.is_empty()) else {
        return Ok(None);
    };
    let ts = parse_timestamp(raw)
        .ok_or_else(|| ApiError::bad_request("InvalidParameter", format!("{name}={raw:?} is not a timestamp")))?;
    let date_only = raw.len() <= 10 && !raw.contains('T');
    Ok(Some(if end_of_day && date_only {
        ts + Duration::days(1) - Duration::microseconds(1)
    } else {
        ts
    }))
}

fn range(p: &HashMap<String, String>) -> ApiResult<(DateTime<Utc>, DateTime<Utc>)> {
    let from = time_param(p, "from", false)?
        .ok_or_else(|| ApiError::bad_request("MissingParameter", "from is required"))?;
    let to = time_param(p, "to", true)?.ok_or_else(|| ApiError::bad_request("MissingParameter", "to is required"))?;
    if from > to {
        return Err(ApiError::bad_request("InvalidRange", "from is after to"));
    }
    Ok((from, to))
}

fn registry_error(e: RegistryError) -> ApiError {
    match e {
        RegistryError::InvertedRange { .. } => ApiError::bad_request("InvalidRange", e.to_string()),
        RegistryError::InvalidMonth(_) => ApiError::bad_request("InvalidParameter", e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "RegistryError", other.to_string()),
    }
}

/// Relative image paths are served from `/api/images`.
pub fn thumbnail_url(path: &str) -> String {
    if path.is_empty() || path.starts_with('/') || path.contains("://") {
        return path.to_string();
    }
    format!("/api/images/{}", path.strip_prefix("images/").unwrap_or(path))
}

fn record<'a>(snap: &'a CatalogSnapshot, id: &str) -> ApiResult<&'a DatasetRecord> {
    snap.records.get(id).ok_or_else(|| ApiError::unknown(id))
}

fn item_json(r: &DatasetRecord, lang: Lang) -> Value {
    json!({
        "id": r.id,
        "title": r.title.get(lang),
        "snippet": r.snippet.get(lang),
        "thumbnail": thumbnail_url(&r.thumbnail),
        "discipline": r.discipline,
        "keywords": r.keywords,
        "data_kind": r.data_kind,
        "access_count": r.access_count,
    })
}

async fn status(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.store.snapshot();
    Json(json!({
        "version": snap.version,
        "records": snap.records.len(),
        "upstream_fetches": state.fetcher.upstream_fetches(),
        "cache_bytes": state.fetcher.cache().total_bytes(),
        "cache_entries": state.fetcher.cache().len(),
    }))
}

async fn list_datasets(State(state): State<Arc<AppState>>, Query(p): Params) -> ApiResult<Json<Value>> {
    let snap = state.store.snapshot();
    let lang = lang(&p)?;
    let query = SearchQuery {
        text: p.get("q").cloned().unwrap_or_default(),
        chips: p
            .get("chips")
            .map(|c| c.split(',').map(str::trim).filter(|c| !c.is_empty()).map(String::from).collect())
            .unwrap_or_default(),
        combine: param::<Combine>(&p, "combine")?.unwrap_or_default(),
        lang,
    };
    let page = param::<usize>(&p, "page")?.unwrap_or(1);
    let page_size = param::<usize>(&p, "page_size")?.unwrap_or(DEFAULT_PAGE_SIZE);
    let (sort, sort_name, seed) = match p.get("sort").map(String::as_str).unwrap_or("random") {
        "random" => {
            let seed = param::<u64>(&p, "seed")?.unwrap_or_else(|| rand::random_range(0..SEED_LIMIT));
            (SortOrder::Random(seed), "random", Some(seed))
        }
        "access" | "access_desc" => (SortOrder::AccessDesc, "access", None),
        "title" | "title_asc" => (SortOrder::TitleAsc, "title", None),
        other => {
            return Err(ApiError::bad_request("InvalidParameter", format!("sort={other:?}")));
        }
    };
    let result = search(snap.records.values(), &query, sort, page, page_size, |r| state.store.access_count(r))
        .map_err(|e| ApiError::bad_request("InvalidPage", e.to_string()))?;
    let pages = result.total.div_ceil(page_size);
    Ok(Json(json!({
        "version": snap.version,
        "total": result.total,
        "page": page,
        "page_size": page_size,
        "pages": pages,
        "next_page": (page < pages).then_some(page + 1),
        "prev_page": (page > 1).then(|| (page - 1).min(pages.max(1))),
        "sort": sort_name,
        "seed": seed,
        "combine": query.combine,
        "lang": lang,
        "items": result.items.iter().map(|r| item_json(r, lang)).collect::<Vec<_>>(),
    })))
}

async fn get_dataset(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<Json<Value>> {
    let lang = lang(&p)?;
    let snap = state.store.snapshot();
    let mut rec = record(&snap, &id)?.clone();
    let config = snap.config_for(&id).ok_or_else(|| ApiError::unknown(&id))?;
    rec.access_count = state.store.record_access(&id).map_err(|_| ApiError::unknown(&id))?;
    Ok(Json(json!({
        "version": snap.version,
        "id": rec.id,
        "lang": lang,
        "title": rec.title.get(lang),
        "snippet": rec.snippet.get(lang),
        "description": rec.description.get(lang),
        "thumbnail": thumbnail_url(&rec.thumbnail),
        "capabilities": {
            "download_enabled": config.download_enabled,
            "conversion_enabled": config.conversion_enabled,
            "show_visualized": config.show_visualized,
            "granularity": config.granularity,
            "format": config.format,
            "has_manifest": snap.manifests.contains_key(&config.id),
        },
        "metadata_display": rec.metadata_display,
        "record": rec,
    })))
}

async fn get_available_dates(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<Json<Value>> {
    let snap = state.store.snapshot();
    record(&snap, &id)?;
    let year: i32 = required(&p, "year")?;
    let month: u32 = required(&p, "month")?;
    let days = match snap.manifest_for(&id) {
        Some(manifest) => available_dates(manifest, year, month).map_err(registry_error)?,
        None if (1..=12).contains(&month) => Default::default(),
        None => return Err(registry_error(RegistryError::InvalidMonth(month))),
    };
    Ok(Json(json!({ "version": snap.version, "id": id, "year": year, "month": month, "days": days })))
}

async fn related(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<Json<Value>> {
    let lang = lang(&p)?;
    let snap = state.store.snapshot();
    let k = match param::<usize>(&p, "limit")? {
        Some(k) => k,
        None => state.overrides.related_k.unwrap_or(snap.settings.related_k),
    };
    let threshold = state.overrides.related_threshold.unwrap_or(snap.settings.related_threshold);
    let entries = top_related(&snap.scores, &id, k, threshold, |x| snap.records.contains_key(x)).map_err(|e| match e {
        RelatednessError::UnknownDataset(_) => ApiError::unknown(&id),
        other => ApiError::bad_request("InvalidParameter", other.to_string()),
    })?;
    let items: Vec<Value> = entries
        .iter()
        .map(|e| {
            let r = &snap.records[&e.id];
            json!({
                "id": e.id,
                "score": e.score,
                "method": e.method,
                "title": r.title.get(lang),
                "thumbnail": thumbnail_url(&r.thumbnail),
            })
        })
        .collect();
    Ok(Json(json!({ "version": snap.version, "id": id, "threshold": threshold, "items": items })))
}

async fn visuals(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<Json<Value>> {
    let snap = state.store.snapshot();
    record(&snap, &id)?;
    let config = snap.config_for(&id).ok_or_else(|| ApiError::unknown(&id))?;
    if !config.show_visualized {
        return Err(ApiError::new(StatusCode::CONFLICT, "VisualsDisabled", format!("{id} has no visual section")));
    }
    let items: Vec<Value> = if config.granularity == Granularity::Static {
        let mut urls = config.static_visuals.clone();
        if let Some(Ok(template)) = config.visual_template() {
            urls.push(template.expand(&DateTime::<Utc>::UNIX_EPOCH));
        }
        urls.iter().map(|u| json!({ "timestamp": null, "url": thumbnail_url(u) })).collect()
    } else {
        match config.visual_template() {
            None => Vec::new(),
            Some(template) => {
                let template = template.map_err(|e| registry_error(e.into()))?;
                let (from, to) = range(&p)?;
                match snap.manifest_for(&id) {
                    None => Vec::new(),
                    Some(manifest) => resolve_visuals(&template, config.granularity, manifest, from, to)
                        .map_err(registry_error)?
                        .iter()
                        .map(|e| json!({ "timestamp": e.timestamp, "url": e.url }))
                        .collect(),
                }
            }
        }
    };
    Ok(Json(json!({ "version": snap.version, "id": id, "items": items })))
}

async fn network(State(state): State<Arc<AppState>>) -> Response {
    let snap = state.store.snapshot();
    let mut response = ([(header::CONTENT_TYPE, "application/json")], export_graph(&snap.graph)).into_response();
    response.headers_mut().insert(VERSION_HEADER, HeaderValue::from(snap.version));
    response
}

async fn chips(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.store.snapshot();
    let chips = state.overrides.chips.as_ref().unwrap_or(&snap.settings.chips);
    Json(json!({ "version": snap.version, "chips": chips }))
}

async fn image(State(state): State<Arc<AppState>>, Path(path): Path<String>) -> ApiResult<Response> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no image {path}"));
    let dir = state.images_dir.as_ref().ok_or_else(not_found)?;
    let rel = FsPath::new(&path);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(not_found());
    }
    let mime = match rel.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => return Err(not_found()),
    };
    let bytes = tokio::fs::read(dir.join(rel)).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

struct Member {
    name: String,
    timestamp: DateTime<Utc>,
    lease: Lease,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum DownloadFormat {
    Original,
    Ascii,
}

async fn download(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<Response> {
    let snap = state.store.snapshot();
    record(&snap, &id)?;
    let config = snap.config_for(&id).ok_or_else(|| ApiError::unknown(&id))?;
    let format = match p.get("format").map(String::as_str).unwrap_or("original") {
        "original" => DownloadFormat::Original,
        "ascii" => DownloadFormat::Ascii,
        other => return Err(ApiError::bad_request("InvalidParameter", format!("format={other:?}"))),
    };
    if !config.download_enabled {
        return Err(ApiError::new(StatusCode::CONFLICT, "DownloadDisabled", format!("{id} is not downloadable")));
    }
    if format == DownloadFormat::Ascii && !(config.conversion_enabled && config.format == DataFormat::Netcdf) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "FormatUnavailable",
            format!("{id} offers no ASCII conversion"),
        ));
    }
    let (entries, label): (Vec<FileEntry>, String) = if config.granularity == Granularity::Static {
        (vec![static_entry(config).map_err(registry_error)?], id.clone())
    } else {
        let (from, to) = range(&p)?;
        let entries = match snap.manifest_for(&id) {
            Some(manifest) => resolve_range(config, manifest, from, to).map_err(registry_error)?,
            None => Vec::new(),
        };
        (entries, format!("{id}_{}_{}", from.format("%Y%m%d"), to.format("%Y%m%d")))
    };
    if entries.is_empty() {
        return Err(ApiError::bad_request("EmptySelection", "no files in the selected range"));
    }
    let max_files = state.fetcher.policy().max_files;
    if entries.len() > max_files {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "TooManyFiles",
            format!("{} files selected, limit {max_files}", entries.len()),
        ));
    }

    let mut members = Vec::with_capacity(entries.len());
    for entry in &entries {
        let lease = match format {
            DownloadFormat::Original => state.fetcher.fetch(&entry.url).await,
            DownloadFormat::Ascii => state.fetcher.fetch_derived(&entry.url, "ascii", ascii_bytes).await,
        }
        .map_err(|e| fetch_error(&entry.display_name, e))?;
        let name = match format {
            DownloadFormat::Original => entry.display_name.clone(),
            DownloadFormat::Ascii => ascii_name(&entry.display_name),
        };
        members.push(Member { name, timestamp: entry.timestamp, lease });
    }
    let approx: u64 = members.iter().map(|m| 76 + 2 * (m.name.len() as u64 + 8) + m.lease.size).sum();
    if approx + 22 > u32::MAX as u64 {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "ArchiveTooLarge",
            "selection exceeds the 4 GiB archive limit",
        ));
    }

    let mut response = Response::new(zip_body(members));
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/zip"));
    if let Ok(v) = HeaderValue::from_str(&format!("attachment; filename=\"{label}.zip\"")) {
        headers.insert(header::CONTENT_DISPOSITION, v);
    }
    headers.insert(VERSION_HEADER, HeaderValue::from(snap.version));
    Ok(response)
}

fn ascii_bytes(bytes: Vec<u8>) -> Result<Vec<u8>, String> {
    let ds = read_netcdf_classic(&bytes).map_err(|e| e.to_string())?;
    drop(bytes);
    to_ascii(&ds, &AsciiOptions::default()).map(String::into_bytes).map_err(|e| e.to_string())
}

fn ascii_name(display_name: &str) -> String {
    let stem = FsPath::new(display_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("file");
    format!("{stem}.txt")
}

fn fetch_error(file: &str, e: FetchError) -> ApiError {
    let url = e.url().map(display_name_for).unwrap_or_else(|| file.to_string());
    match e {
        FetchError::Derive { .. } => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "ConversionFailed",
            format!("cannot convert {file}: {e}"),
        ),
        FetchError::Cache(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "CacheError", e.to_string()),
        _ => ApiError::new(StatusCode::BAD_GATEWAY, "UpstreamFetchFailed", format!("failed to fetch {url}: {e}")),
    }
}

/// Stored-method archive streamed from leased cache files in fixed chunks.
fn zip_body(members: Vec<Member>) -> Body {
    let (tx, rx) = mpsc::channel::<Result<Bytes, io::Error>>(4);
    tokio::spawn(async move {
        let mut writer = ZipStreamWriter::new();
        for member in members {
            let header = match writer.begin_member_sized(&member.name, member.timestamp, member.lease.size, member.lease.crc)
            {
                Ok(h) => h,
                Err(e) => {
                    let _ = tx.send(Err(io::Error::other(e))).await;
                    return;
                }
            };
            if tx.send(Ok(Bytes::from(header))).await.is_err() {
                return;
            }
            if let Err(e) = send_file(&tx, &member.lease).await {
                tracing::warn!(file = %member.name, error = %e, "download aborted");
                let _ = tx.send(Err(e)).await;
                return;
            }
        }
        match writer.finish() {
            Ok(tail) => {
                let _ = tx.send(Ok(Bytes::from(tail))).await;
            }
            Err(e) => {
                let _ = tx.send(Err(io::Error::other(e))).await;
            }
        }
    });
    Body::from_stream(ReceiverStream::new(rx))
}

async fn send_file(tx: &mpsc::Sender<Result<Bytes, io::Error>>, lease: &Lease) -> io::Result<()> {
    let mut file = tokio::fs::File::open(&lease.path).await?;
    let mut sent = 0u64;
    loop {
        let mut buf = vec![0u8; CHUNK_BYTES];
        let n = file.read(&mut buf).await?;
        if n == 0 {
            break;
        }
        buf.truncate(n);
        sent += n as u64;
        if tx.send(Ok(Bytes::from(buf))).await.is_err() {
            return Ok(());
        }
    }
    if sent != lease.size {
        return Err(io::Error::other(format!("cached file changed size: {sent} != {}", lease.size)));
    }
    Ok(())
}
