//! Offline pipeline stages. Each stage reads a snapshot directory, replaces
//! its own part and writes the snapshot back under the next version.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use rdcat_core::config::{load_dataset_config, DatasetConfig};
use rdcat_core::convert::{extract_timeseries, to_ascii, AdapterRegistry, AsciiOptions, TimeSeries};
use rdcat_core::ingest::{ingest_directory, IngestOptions, MappingTable};
use rdcat_core::registry::{resolve_range, AvailabilityManifest};
use rdcat_core::relatedness::{
    compute_score_matrix, scores_to_tsv, AlignmentSpec, Ground, ScoreOptions, ScoringData, ScoringInput,
};
use rdcat_core::store::{read_snapshot, write_snapshot, CatalogSnapshot, IMAGES_DIR, INDEX_FILE};
use rdcat_core::textnet::{
    build_cooccurrence, export_graph, parse_list, RuleTokenizer, DEFAULT_PHRASES, DEFAULT_STOPWORDS,
};
use rdcat_server::{FetchPolicy, Fetcher};
use serde_json::json;

use crate::report::{emit, file_error, summary, Fatal, Outcome};

fn require_dir(path: &Path, what: &str) -> Result<(), Fatal> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Fatal(format!("{what} {} is not a directory", path.display())))
    }
}

fn load_snapshot(dir: &Path) -> Result<CatalogSnapshot, Fatal> {
    read_snapshot(dir).map_err(|e| Fatal(format!("cannot read snapshot {}: {e}", dir.display())))
}

fn save(dir: &Path, mut snapshot: CatalogSnapshot, previous: u64) -> Result<u64, Fatal> {
    snapshot.version = previous + 1;
    write_snapshot(dir, &snapshot).map_err(|e| Fatal(format!("cannot write snapshot {}: {e}", dir.display())))?;
    Ok(snapshot.version)
}

fn sorted_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>, Fatal> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()).is_some_and(|e| extensions.contains(&e)))
        .collect();
    files.sort();
    Ok(files)
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let path = entry?.path();
        let target = to.join(path.file_name().expect("read_dir entries have names"));
        if path.is_dir() {
            copy_tree(&path, &target)?;
        } else {
            fs::copy(&path, &target)?;
        }
    }
    Ok(())
}

pub struct IngestArgs<'a> {
    pub metadata_dir: &'a Path,
    pub config_dir: &'a Path,
    pub out: &'a Path,
    pub mapping: Option<&'a Path>,
}

/// Configs (`*.yaml`), their manifests and `images/` come from the config
/// directory; records come from every `*.xml` below the metadata directory.
/// Scores, graph and settings of an existing snapshot at `out` are kept.
pub fn ingest(args: IngestArgs<'_>) -> Result<Outcome, Fatal> {
    const CMD: &str = "ingest";
    require_dir(args.metadata_dir, "metadata directory")?;
    require_dir(args.config_dir, "config directory")?;
    let mapping = match args.mapping {
        Some(path) => Some(
            MappingTable::parse(&fs::read_to_string(path)?)
                .map_err(|e| Fatal(format!("mapping {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let previous = if args.out.join(INDEX_FILE).exists() { Some(load_snapshot(args.out)?) } else { None };

    let mut outcome = Outcome::Success;
    let mut configs: BTreeMap<String, DatasetConfig> = BTreeMap::new();
    let mut manifests: BTreeMap<String, AvailabilityManifest> = BTreeMap::new();
    for file in sorted_files(args.config_dir, &["yaml", "yml"])? {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let config = match fs::read_to_string(&file).map_err(|e| e.to_string()).and_then(|text| {
            load_dataset_config(&text, &stem).map_err(|e| e.to_string())
        }) {
            Ok(c) => c,
            Err(e) => {
                file_error(CMD, &file, e);
                outcome = Outcome::Partial;
                continue;
            }
        };
        if configs.contains_key(&config.id) {
            file_error(CMD, &file, format!("duplicate config id {}", config.id));
            outcome = Outcome::Partial;
            continue;
        }
        if let Some(rel) = &config.manifest_path {
            let path = args.config_dir.join(rel);
            match fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|text| AvailabilityManifest::parse(config.id.clone(), &text).map_err(|e| e.to_string()))
            {
                Ok(m) => {
                    manifests.insert(config.id.clone(), m);
                }
                Err(e) => {
                    file_error(CMD, &path, e);
                    outcome = Outcome::Partial;
                }
            }
        }
        configs.insert(config.id.clone(), config);
    }

    let options = IngestOptions { configs: Some(configs.clone()), mapping, ..Default::default() };
    let report = ingest_directory(args.metadata_dir, &options)?;
    for error in &report.errors {
        file_error(CMD, &error.file, &error.error);
        outcome = Outcome::Partial;
    }

    let (version, mut snapshot) = match previous {
        Some(prev) => (prev.version, prev),
        None => (0, CatalogSnapshot::default()),
    };
    snapshot.records = report.records.into_iter().map(|r| (r.id.clone(), r)).collect();
    snapshot.configs = configs;
    snapshot.manifests = manifests;
    let records = &snapshot.records;
    snapshot.scores.retain(|s| records.contains_key(&s.dataset_a) && records.contains_key(&s.dataset_b));
    let images = args.config_dir.join(IMAGES_DIR);
    if images.is_dir() {
        copy_tree(&images, &args.out.join(IMAGES_DIR))?;
    }
    let (n_records, n_configs) = (snapshot.records.len(), snapshot.configs.len());
    let version = save(args.out, snapshot, version)?;
    summary(json!({ "command": CMD, "records": n_records, "configs": n_configs, "errors": report.errors.len(), "version": version }));
    Ok(outcome)
}

pub struct ScoreArgs<'a> {
    pub snapshot: &'a Path,
    pub threshold: Option<f64>,
    pub k: Option<usize>,
    pub jobs: usize,
    pub cadence_secs: i64,
    pub min_overlap: usize,
    pub ground: Option<&'a Path>,
    pub cache_dir: Option<&'a Path>,
}

/// Score every dataset whose config names a composition or a score variable.
/// Time series are read from every file in the dataset's manifest.
pub fn score(args: ScoreArgs<'_>) -> Result<Outcome, Fatal> {
    const CMD: &str = "score";
    let mut snapshot = load_snapshot(args.snapshot)?;
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Fatal(format!("threshold {t} outside [0, 1]")));
        }
    }
    if args.k == Some(0) {
        return Err(Fatal("k must be at least 1".into()));
    }
    let ground = match args.ground {
        Some(path) => serde_json::from_str::<Ground>(&fs::read_to_string(path)?)
            .map_err(|e| Fatal(format!("ground {}: {e}", path.display())))?,
        None => Ground::Absolute,
    };
    let alignment = AlignmentSpec {
        cadence: TimeDelta::try_seconds(args.cadence_secs).ok_or_else(|| Fatal("cadence out of range".into()))?,
        min_overlap_points: args.min_overlap,
        ..AlignmentSpec::default()
    };
    alignment.check()?;

    let scratch = tempfile::tempdir()?;
    let policy = FetchPolicy {
        cache_dir: args.cache_dir.map(Path::to_path_buf).unwrap_or_else(|| scratch.path().join("cache")),
        ..FetchPolicy::default()
    };
    let runtime = tokio::runtime::Runtime::new()?;
    let fetcher = Fetcher::new(policy)?;

    let mut outcome = Outcome::Success;
    let mut inputs = Vec::new();
    for (id, _) in &snapshot.records {
        let Some(config) = snapshot.config_for(id) else { continue };
        let data = if let Some(h) = &config.composition {
            ScoringData::Composition(h.clone())
        } else if let (Some(variable), Some(manifest)) = (&config.score_variable, snapshot.manifest_for(id)) {
            let (series, failed) = runtime.block_on(load_series(&fetcher, config, manifest, variable));
            if failed {
                outcome = Outcome::Partial;
            }
            match series {
                Some(s) => ScoringData::Series(s),
                None => continue,
            }
        } else {
            continue;
        };
        inputs.push(ScoringInput { id: id.clone(), data });
    }

    let options = ScoreOptions { alignment, ground, jobs: args.jobs };
    let report = compute_score_matrix(&inputs, &options)?;
    for failure in &report.failures {
        emit(
            "warning",
            CMD,
            &failure.error,
            json!({ "dataset_a": failure.dataset_a, "dataset_b": failure.dataset_b }),
        );
    }
    snapshot.scores = report.scores;
    if let Some(t) = args.threshold {
        snapshot.settings.related_threshold = t;
    }
    if let Some(k) = args.k {
        snapshot.settings.related_k = k;
    }
    let n = snapshot.scores.len();
    let version = save(args.snapshot, snapshot.clone(), snapshot.version)?;
    summary(json!({
        "command": CMD,
        "inputs": inputs.len(),
        "scores": n,
        "skipped_pairs": report.failures.len(),
        "version": version,
    }));
    Ok(outcome)
}

/// The concatenated series over every manifest file; unreadable files are
/// reported and skipped. The flag is set when any file failed.
async fn load_series(
    fetcher: &Fetcher,
    config: &DatasetConfig,
    manifest: &AvailabilityManifest,
    variable: &str,
) -> (Option<TimeSeries>, bool) {
    let (Some(first), Some(last)) = (manifest.timestamps().first(), manifest.timestamps().last()) else {
        return (None, false);
    };
    let entries = match resolve_range(config, manifest, *first, *last) {
        Ok(e) => e,
        Err(e) => {
            emit("error", "score", e, json!({ "config": config.id }));
            return (None, true);
        }
    };
    let adapters = AdapterRegistry::default();
    let mut parts = Vec::new();
    let mut failed = false;
    for entry in entries {
        let result = async {
            let lease = fetcher.fetch(&entry.url).await.map_err(|e| e.to_string())?;
            let bytes = fs::read(&lease.path).map_err(|e| e.to_string())?;
            let dataset = adapters.read(&bytes).map_err(|e| e.to_string())?;
            extract_timeseries(&dataset, variable).map_err(|e| e.to_string())
        }
        .await;
        match result {
            Ok(s) => parts.push(s),
            Err(e) => {
                emit("error", "score", e, json!({ "config": config.id, "url": entry.url }));
                failed = true;
            }
        }
    }
    if parts.is_empty() {
        return (None, failed);
    }
    (Some(TimeSeries::concat(parts)), failed)
}

pub fn export_scores(snapshot: &Path, out: Option<&Path>) -> Result<Outcome, Fatal> {
    let snapshot = load_snapshot(snapshot)?;
    let text = scores_to_tsv(&snapshot.scores);
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Success)
}

pub struct TextnetArgs<'a> {
    pub snapshot: &'a Path,
    pub min_count: usize,
    pub min_co: usize,
    pub phrases: Option<&'a Path>,
    pub stopwords: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

/// Build the co-occurrence graph over English titles in id order.
pub fn textnet(args: TextnetArgs<'_>) -> Result<Outcome, Fatal> {
    if args.min_count == 0 || args.min_co == 0 {
        return Err(Fatal("min-count and min-co must be at least 1".into()));
    }
    let mut snapshot = load_snapshot(args.snapshot)?;
    let tokenizer = match (args.phrases, args.stopwords) {
        (None, None) => RuleTokenizer::builtin(),
        (phrases, stopwords) => {
            let read = |p: Option<&Path>| -> Result<Option<Vec<String>>, Fatal> {
                p.map(|p| fs::read_to_string(p).map(|t| parse_list(&t))).transpose().map_err(Fatal::from)
            };
            let builtin_phrases = parse_list(DEFAULT_PHRASES);
            let builtin_stopwords = parse_list(DEFAULT_STOPWORDS);
            RuleTokenizer::new(
                read(phrases)?.unwrap_or(builtin_phrases),
                read(stopwords)?.unwrap_or(builtin_stopwords),
            )
        }
    };
    let titles: Vec<&str> = snapshot.records.values().map(|r| r.title.en.as_str()).collect();
    let graph = build_cooccurrence(&titles, &tokenizer, args.min_count, args.min_co);
    if let Some(out) = args.out {
        fs::write(out, export_graph(&graph))?;
    }
    let (nodes, edges) = (graph.nodes.len(), graph.edges.len());
    snapshot.graph = graph;
    let version = save(args.snapshot, snapshot.clone(), snapshot.version)?;
    summary(json!({ "command": "textnet", "titles": titles.len(), "nodes": nodes, "edges": edges, "version": version }));
    Ok(Outcome::Success)
}

pub fn convert(input: &Path, ascii: Option<&Path>, variables: Option<Vec<String>>, delimiter: char) -> Result<Outcome, Fatal> {
    let bytes = fs::read(input).map_err(|e| Fatal(format!("{}: {e}", input.display())))?;
    let dataset = AdapterRegistry::default().read(&bytes).map_err(|e| Fatal(format!("{}: {e}", input.display())))?;
    let text = to_ascii(&dataset, &AsciiOptions { variables, delimiter })?;
    match ascii {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Success)
}
