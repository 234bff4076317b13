//! Remote file registry: template expansion over time, availability
//! manifests and zip packaging.

pub mod template;
pub mod zip;

use std::collections::BTreeSet;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, Granularity};
pub use template::{expand_template, Template, TemplateError, Token};
pub use zip::{package_zip, ZipEntry, ZipError, ZipStreamWriter};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("range start {from} is after range end {to}")]
    InvertedRange {
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    },
    #[error("month {0} is outside 1..=12")]
    InvalidMonth(u32),
    #[error(transparent)]
    InvalidTemplate(#[from] TemplateError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

/// One concrete granule of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub timestamp: DateTime<Utc>,
    pub url: String,
    pub display_name: String,
}

/// Sorted, unique timestamps at which a dataset has a data file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AvailabilityManifest {
    pub dataset_id: String,
    timestamps: Vec<DateTime<Utc>>,
}

impl AvailabilityManifest {
    pub fn new(
        dataset_id: impl Into<String>,
        mut timestamps: Vec<DateTime<Utc>>,
    ) -> Self {
        timestamps.sort();
        timestamps.dedup();
        Self {
            dataset_id: dataset_id.into(),
            timestamps,
        }
    }

    /// One ISO 8601 timestamp per line, ascending. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(dataset_id: impl Into<String>, text: &str) -> Result<Self, RegistryError> {
        let mut timestamps: Vec<DateTime<Utc>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ts = parse_timestamp(line).ok_or_else(|| RegistryError::Manifest {
                line: idx + 1,
                message: format!("cannot parse timestamp {line:?}"),
            })?;
            if let Some(prev) = timestamps.last() {
                if ts <= *prev {
                    return Err(RegistryError::Manifest {
                        line: idx + 1,
                        message: format!("{line} is not after the previous entry"),
                    });
                }
            }
            timestamps.push(ts);
        }
        Ok(Self {
            dataset_id: dataset_id.into(),
            timestamps,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ts in &self.timestamps {
            out.push_str(&ts.format("%Y-%m-%dT%H:%M:%SZ").to_string());
            out.push('\n');
        }
        out
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    fn within(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> &[DateTime<Utc>] {
        let lo = self.timestamps.partition_point(|t| *t < from);
        let hi = self.timestamps.partition_point(|t| *t <= to);
        &self.timestamps[lo..hi.max(lo)]
    }
}

/// Accepts `YYYY-MM-DD`, RFC 3339, and naive `YYYY-MM-DD[T ]HH[:MM[:SS]]` (read as UTC).
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
        return Some(ts.with_timezone(&Utc));
    }
    let naive = text.strip_suffix('Z').unwrap_or(text);
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
            return Some(Utc.from_utc_datetime(&dt));
        }
    }
    if let Some((date, hour)) = naive.split_once('T') {
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
        let hour: u32 = hour.parse().ok()?;
        return Some(Utc.from_utc_datetime(&date.and_hms_opt(hour, 0, 0)?));
    }
    let date = NaiveDate::parse_from_str(naive, "%Y-%m-%d").ok()?;
    Some(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0)?))
}

/// Truncate a timestamp to the start of its granule.
pub fn truncate_to(ts: DateTime<Utc>, granularity: Granularity) -> DateTime<Utc> {
    let date = ts.date_naive();
    let truncated = match granularity {
        Granularity::Static => return ts,
        Granularity::Hourly => date.and_hms_opt(ts.hour(), 0, 0),
        Granularity::Daily => date.and_hms_opt(0, 0, 0),
        Granularity::Monthly => date.with_day(1).and_then(|d| d.and_hms_opt(0, 0, 0)),
    };
    truncated.map(|dt| Utc.from_utc_datetime(&dt)).unwrap_or(ts)
}

/// Last path segment of a URL, without query or fragment.
pub fn display_name_for(url: &str) -> String {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    let path = path.split_once("://").map(|(_, rest)| rest).unwrap_or(path);
    match path.split_once('/') {
        Some((_, p)) => p
            .rsplit('/')
            .find(|s| !s.is_empty())
            .unwrap_or("file")
            .to_string(),
        None => "file".to_string(),
    }
}

/// Granules listed in the manifest within `[from, to]`, ascending.
pub fn resolve_range(
    config: &DatasetConfig,
    manifest: &AvailabilityManifest,
    from: DateTime<Utc>,
    to: DateTime<Utc>,
) -> Result<Vec<FileEntry>, RegistryError> {
    if from > to {
        return Err(RegistryError::InvertedRange { from, to });
    }
    let template = config.data_template()?;
    Ok(expand_entries(&template, config.granularity, manifest.within(from, to)))
}

/// Visual URLs for manifest timestamps in range, using the visual template.
pub fn resolve_visuals(
    template: &Template,
    granularity: Granularity,
    manifest: &AvailabilityManifest,
    from: DateTime<Utc>,
    to: DateTime<Utc>,
) -> Result<Vec<FileEntry>, RegistryError> {
    if from > to {
        return Err(RegistryError::InvertedRange { from, to });
    }
    Ok(expand_entries(template, granularity, manifest.within(from, to)))
}

/// The single granule of a static dataset.
pub fn static_entry(config: &DatasetConfig) -> Result<FileEntry, RegistryError> {
    let template = config.data_template()?;
    let url = template.expand(&DateTime::<Utc>::UNIX_EPOCH);
    Ok(FileEntry {
        timestamp: DateTime::<Utc>::UNIX_EPOCH,
        display_name: display_name_for(&url),
        url,
    })
}

fn expand_entries(
    template: &Template,
    granularity: Granularity,
    timestamps: &[DateTime<Utc>],
) -> Vec<FileEntry> {
    let mut entries: Vec<FileEntry> = Vec::with_capacity(timestamps.len());
    for ts in timestamps {
        let ts = truncate_to(*ts, granularity);
        if entries.last().is_some_and(|e| e.timestamp == ts) {
            continue;
        }
        let url = template.expand(&ts);
        entries.push(FileEntry {
            timestamp: ts,
            display_name: display_name_for(&url),
            url,
        });
    }
    entries
}

/// Days of `year`-`month` on which at least one manifest timestamp falls.
pub fn available_dates(
    manifest: &AvailabilityManifest,
    year: i32,
    month: u32,
) -> Result<BTreeSet<u32>, RegistryError> {
    if !(1..=12).contains(&month) {
        return Err(RegistryError::InvalidMonth(month));
    }
    let start = NaiveDate::from_ymd_opt(year, month, 1).ok_or(RegistryError::InvalidMonth(month))?;
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .ok_or(RegistryError::InvalidMonth(month))?;
    let lo = Utc.from_utc_datetime(&start.and_hms_opt(0, 0, 0).expect("midnight"));
    let hi = Utc.from_utc_datetime(&next.and_hms_opt(0, 0, 0).expect("midnight"));
    let ts = manifest.timestamps();
    let a = ts.partition_point(|t| *t < lo);
    let b = ts.partition_point(|t| *t < hi);
    Ok(ts[a..b].iter().map(|t| t.day()).collect())
}
