//! Catalog core: the uniform dataset record, XML metadata ingestion,
//! filename-template file registry, NetCDF conversion, relatedness scoring,
//! title co-occurrence networks, search and versioned snapshots.

pub mod config;
pub mod convert;
pub mod ingest;
pub mod model;
pub mod query;
pub mod registry;
pub mod relatedness;
pub mod store;
pub mod textnet;

pub use config::{load_dataset_config, ConfigError, DataFormat, DatasetConfig, Granularity};
pub use model::{
    validate_record, Contact, DataKind, DatasetRecord, Lang, LocalizedText, Site, SourceSchema, TimeSpan,
    ValidationError,
};
pub use query::{search, sort_records, Combine, QueryError, SearchPage, SearchQuery, SortOrder};
pub use relatedness::{compute_score_matrix, top_related, Method, RelatednessError, RelatednessScore};
pub use store::{CatalogSnapshot, CatalogStore, IntegrityError, SnapshotError};
pub use textnet::{build_cooccurrence, export_graph, CooccurrenceGraph, RuleTokenizer, Tokenizer};
