//! `rdcat`: offline catalog pipeline and HTTP server.
//!
//! Exit codes: 0 success, 1 partial failures, 2 fatal. Diagnostics are JSON
//! lines on stderr; run summaries are single JSON lines on stdout.

mod pipeline;
mod report;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use rdcat_server::{FetchPolicy, Overrides, ServerConfig};
use serde_json::json;

use report::{emit, Fatal, Outcome, FATAL_EXIT};

#[derive(Debug, Parser)]
#[command(name = "rdcat", version, about = "Research-data catalog pipeline and server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse metadata documents and dataset configs into a snapshot.
    Ingest {
        /// Directory searched recursively for `*.xml` metadata documents.
        metadata_dir: PathBuf,
        /// Directory of `*.yaml` dataset configs, manifests and `images/`.
        config_dir: PathBuf,
        /// Snapshot directory to create or update.
        #[arg(long)]
        out: PathBuf,
        /// Replacement XPath mapping table (YAML).
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Compute relatedness scores between datasets.
    Score {
        #[arg(long)]
        snapshot: PathBuf,
        /// Minimum score for the related list, stored in the snapshot.
        #[arg(long)]
        threshold: Option<f64>,
        /// Maximum related entries, stored in the snapshot.
        #[arg(long)]
        k: Option<usize>,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Alignment cadence in seconds.
        #[arg(long, default_value_t = 60)]
        cadence_secs: i64,
        /// Fewest aligned pairs for a Pearson score.
        #[arg(long, default_value_t = 16)]
        min_overlap: usize,
        /// JSON ground distance for composition histograms.
        #[arg(long)]
        ground: Option<PathBuf>,
        /// Download cache (default: a temporary directory).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Print the score table as TSV.
    ExportScores {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the title co-occurrence network.
    Textnet {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = rdcat_core::textnet::DEFAULT_MIN_COUNT)]
        min_count: usize,
        #[arg(long, default_value_t = rdcat_core::textnet::DEFAULT_MIN_CO)]
        min_co: usize,
        /// Phrase dictionary, one phrase per line.
        #[arg(long)]
        phrases: Option<PathBuf>,
        /// Stopword list, one word per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Also write the graph document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a NetCDF classic file to delimited text.
    Convert {
        input: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        ascii: Option<PathBuf>,
        /// Comma-separated variables to write, in order.
        #[arg(long, value_delimiter = ',')]
        vars: Option<Vec<String>>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Serve the HTTP API over a snapshot directory.
    Serve {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        cache_max_bytes: Option<u64>,
        #[arg(long)]
        max_file_bytes: Option<u64>,
        #[arg(long)]
        max_files: Option<usize>,
        /// Per-file fetch timeout in seconds.
        #[arg(long)]
        timeout_secs: Option<u64>,
        /// Comma-separated chip list overriding the snapshot's.
        #[arg(long, value_delimiter = ',')]
        chips: Option<Vec<String>>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Snapshot poll interval in seconds.
        #[arg(long, default_value_t = 5)]
        reload_secs: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Score { .. } => "score",
            Command::ExportScores { .. } => "export-scores",
            Command::Textnet { .. } => "textnet",
            Command::Convert { .. } => "convert",
            Command::Serve { .. } => "serve",
        }
    }
}

fn serve(config: ServerConfig) -> Result<Outcome, Fatal> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(rdcat_server::serve(config))?;
    Ok(Outcome::Success)
}

fn run(command: Command) -> Result<Outcome, Fatal> {
    match command {
        Command::Ingest { metadata_dir, config_dir, out, mapping } => pipeline::ingest(pipeline::IngestArgs {
            metadata_dir: &metadata_dir,
            config_dir: &config_dir,
            out: &out,
            mapping: mapping.as_deref(),
        }),
        Command::Score { snapshot, threshold, k, jobs, cadence_secs, min_overlap, ground, cache_dir } => {
            pipeline::score(pipeline::ScoreArgs {
                snapshot: &snapshot,
                threshold,
                k,
                jobs,
                cadence_secs,
                min_overlap,
                ground: ground.as_deref(),
                cache_dir: cache_dir.as_deref(),
            })
        }
        Command::ExportScores { snapshot, out } => pipeline::export_scores(&snapshot, out.as_deref()),
        Command::Textnet { snapshot, min_count, min_co, phrases, stopwords, out } => {
            pipeline::textnet(pipeline::TextnetArgs {
                snapshot: &snapshot,
                min_count,
                min_co,
                phrases: phrases.as_deref(),
                stopwords: stopwords.as_deref(),
                out: out.as_deref(),
            })
        }
        Command::Convert { input, ascii, vars, delimiter } => pipeline::convert(&input, ascii.as_deref(), vars, delimiter),
        Command::Serve {
            snapshot,
            listen,
            cache_dir,
            cache_max_bytes,
            max_file_bytes,
            max_files,
            timeout_secs,
            chips,
            threshold,
            k,
            reload_secs,
        } => {
            let defaults = FetchPolicy::default();
            let policy = FetchPolicy {
                timeout: timeout_secs.map(Duration::from_secs).unwrap_or(defaults.timeout),
                max_file_bytes: max_file_bytes.unwrap_or(defaults.max_file_bytes),
                max_files: max_files.unwrap_or(defaults.max_files),
                cache_dir: cache_dir.unwrap_or(defaults.cache_dir),
                cache_max_bytes: cache_max_bytes.unwrap_or(defaults.cache_max_bytes),
            };
            if reload_secs == 0 {
                return Err(Fatal("reload-secs must be at least 1".into()));
            }
            serve(ServerConfig {
                listen,
                snapshot_dir: snapshot,
                policy,
                overrides: Overrides { chips, related_threshold: threshold, related_k: k },
                reload_interval: Duration::from_secs(reload_secs),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli.command) {
        Ok(outcome) => ExitCode::from(outcome as u8),
        Err(Fatal(message)) => {
            emit("fatal", name, message, json!({}));
            ExitCode::from(FATAL_EXIT as u8)
        }
    }
}
