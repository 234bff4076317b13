//! Uniform catalog record and its validation rules.
//!
//! Both accepted metadata schemas are mapped onto [`DatasetRecord`]; every
//! other part of the catalog (search, relatedness, the HTTP API) works on
//! this type only.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, Granularity};

/// Upper bound on snippet length, in characters, per language.
pub const SNIPPET_MAX_CHARS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    En,
    Ja,
}

impl std::str::FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Lang::En),
            "ja" => Ok(Lang::Ja),
            other => Err(format!("unknown language {other:?}")),
        }
    }
}

/// English text with an optional Japanese variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LocalizedText {
    pub en: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ja: Option<String>,
}

impl LocalizedText {
    pub fn en(text: impl Into<String>) -> Self {
        Self {
            en: text.into(),
            ja: None,
        }
    }

    pub fn with_ja(mut self, text: impl Into<String>) -> Self {
        self.ja = Some(text.into());
        self
    }

    /// Text in `lang`, falling back to English when the Japanese variant is
    /// absent or blank.
    pub fn get(&self, lang: Lang) -> &str {
        match (lang, &self.ja) {
            (Lang::Ja, Some(ja)) if !ja.trim().is_empty() => ja,
            _ => &self.en,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSchema {
    SpaseIugonet,
    Iso19115,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    TimeSeries,
    Composition,
    Specimen,
    #[default]
    Other,
}

impl std::str::FromStr for DataKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time_series" => Ok(DataKind::TimeSeries),
            "composition" => Ok(DataKind::Composition),
            "specimen" => Ok(DataKind::Specimen),
            "other" => Ok(DataKind::Other),
            other => Err(format!("unknown data kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Site {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Contact {
    pub role: String,
    pub name: String,
    #[serde(default)]
    pub affiliation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub email: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// The schema-independent catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub source_id: String,
    pub source_schema: SourceSchema,
    pub title: LocalizedText,
    pub snippet: LocalizedText,
    pub description: LocalizedText,
    #[serde(default)]
    pub discipline: Vec<String>,
    #[serde(default)]
    pub data_kind: DataKind,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<Site>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_coverage: Option<TimeSpan>,
    #[serde(default)]
    pub contacts: Vec<Contact>,
    #[serde(default)]
    pub thumbnail: String,
    /// Selected source elements shown verbatim in the dataset page table.
    #[serde(default)]
    pub metadata_display: Vec<(String, String)>,
    #[serde(default)]
    pub access_count: u64,
    #[serde(default)]
    pub config_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ValidationError {
    InvalidId { id: String },
    MissingSourceId,
    MissingTitle,
    SnippetTooLong { lang: Lang, chars: usize },
    InvertedTimeSpan,
    UnresolvedConfig { config_ref: String },
    MissingTimeTemplate { config_ref: String },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidId { id } => write!(f, "invalid catalog id {id:?}"),
            Self::MissingSourceId => f.write_str("missing source identifier"),
            Self::MissingTitle => f.write_str("missing English title"),
            Self::SnippetTooLong { lang, chars } => write!(
                f,
                "{lang:?} snippet has {chars} characters (max {SNIPPET_MAX_CHARS})"
            ),
            Self::InvertedTimeSpan => f.write_str("temporal coverage ends before it starts"),
            Self::UnresolvedConfig { config_ref } => {
                write!(f, "config {config_ref:?} does not exist")
            }
            Self::MissingTimeTemplate { config_ref } => write!(
                f,
                "time-series dataset needs a time-granular config, {config_ref:?} is static"
            ),
        }
    }
}

/// Lowercase ASCII alphanumerics separated by single hyphens.
pub fn is_valid_slug(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('-')
        && !id.ends_with('-')
        && !id.contains("--")
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Check every record invariant; an empty list means the record is valid.
pub fn validate_record(
    record: &DatasetRecord,
    configs: &BTreeMap<String, DatasetConfig>,
) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    if !is_valid_slug(&record.id) {
        errors.push(ValidationError::InvalidId {
            id: record.id.clone(),
        });
    }
    if record.source_id.trim().is_empty() {
        errors.push(ValidationError::MissingSourceId);
    }
    if record.title.en.trim().is_empty() {
        errors.push(ValidationError::MissingTitle);
    }
    for (lang, text) in [
        (Lang::En, Some(&record.snippet.en)),
        (Lang::Ja, record.snippet.ja.as_ref()),
    ] {
        if let Some(text) = text {
            let chars = text.chars().count();
            if chars > SNIPPET_MAX_CHARS {
                errors.push(ValidationError::SnippetTooLong { lang, chars });
            }
        }
    }
    if let Some(span) = &record.temporal_coverage {
        if span.end < span.start {
            errors.push(ValidationError::InvertedTimeSpan);
        }
    }
    match configs.get(&record.config_ref) {
        None => errors.push(ValidationError::UnresolvedConfig {
            config_ref: record.config_ref.clone(),
        }),
        Some(config) => {
            if record.data_kind == DataKind::TimeSeries
                && config.granularity == Granularity::Static
            {
                errors.push(ValidationError::MissingTimeTemplate {
                    config_ref: record.config_ref.clone(),
                });
            }
        }
    }
    errors
}

/// Truncate to the snippet bound on a character boundary.
pub fn truncate_snippet(text: &str) -> String {
    if text.chars().count() <= SNIPPET_MAX_CHARS {
        return text.to_string();
    }
    let mut out: String = text.chars().take(SNIPPET_MAX_CHARS - 1).collect();
    out.push('…');
    out
}
