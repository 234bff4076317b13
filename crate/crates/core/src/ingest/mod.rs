//! Source metadata ingestion for SPASE/IUGONET and ISO 19115 (19139 XML).
//!
//! Element mappings live in a data file ([`MappingTable`]); this module only
//! routes documents to a schema, applies transforms and assembles records.

pub mod mapping;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use roxmltree::{Document, Node};

use crate::config::DatasetConfig;
use crate::model::{
    truncate_snippet, validate_record, Contact, DataKind, DatasetRecord, LocalizedText, Site,
    SourceSchema, TimeSpan, ValidationError,
};
use crate::registry::parse_timestamp;
pub use mapping::{MappingError, MappingRule, MappingTable, Target, Transform};
use mapping::{child, child_text, is_japanese, select, text_of};

const GMD_NS: &str = "http://www.isotc211.org/2005/gmd";

/// SPASE resource elements that describe a dataset, in routing priority.
const SPASE_RESOURCES: &[&str] = &[
    "NumericalData",
    "DisplayData",
    "Catalog",
    "Collection",
    "Document",
    "Annotation",
    "Granule",
    "Instrument",
    "Observatory",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("missing required element for {0}")]
    MissingRequired(String),
    #[error("unsupported root element: {0}")]
    UnsupportedRoot(String),
    #[error("invalid {field} value {value:?}")]
    InvalidValue { field: String, value: String },
    #[error("record is invalid: {}", join_errors(.0))]
    Invalid(Vec<ValidationError>),
    #[error("cannot read file: {0}")]
    Io(String),
}

fn join_errors(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Data kind by source id or slug; wins over inference and config overlays.
    pub kind_overrides: BTreeMap<String, DataKind>,
    /// Explicit slug by source id.
    pub slug_overrides: BTreeMap<String, String>,
    /// When present, records are linked to configs and fully validated.
    pub configs: Option<BTreeMap<String, DatasetConfig>>,
    /// Falls back to the builtin table.
    pub mapping: Option<MappingTable>,
}

impl IngestOptions {
    fn table(&self) -> &MappingTable {
        self.mapping.as_ref().unwrap_or_else(|| MappingTable::builtin())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileError {
    pub file: PathBuf,
    pub error: IngestError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    /// Sorted by id.
    pub records: Vec<DatasetRecord>,
    /// Sorted by file path.
    pub errors: Vec<FileError>,
}

/// Route a document by its root element name and namespace.
pub fn detect_schema(document: &str) -> Result<SourceSchema, IngestError> {
    let doc = Document::parse(document).map_err(|e| IngestError::Xml(e.to_string()))?;
    schema_of(doc.root_element())
}

fn schema_of(root: Node<'_, '_>) -> Result<SourceSchema, IngestError> {
    let name = root.tag_name().name();
    let ns = root.tag_name().namespace().unwrap_or("");
    let ns_lower = ns.to_ascii_lowercase();
    match name {
        "Spase" if ns.is_empty() || ns_lower.contains("spase") || ns_lower.contains("iugonet") => {
            Ok(SourceSchema::SpaseIugonet)
        }
        "MD_Metadata" if ns == GMD_NS => Ok(SourceSchema::Iso19115),
        _ if ns.is_empty() => Err(IngestError::UnsupportedRoot(name.to_string())),
        _ => Err(IngestError::UnsupportedRoot(format!("{{{ns}}}{name}"))),
    }
}

/// Parse a document of either schema.
pub fn parse_document(document: &str, options: &IngestOptions) -> Result<DatasetRecord, IngestError> {
    let doc = Document::parse(document).map_err(|e| IngestError::Xml(e.to_string()))?;
    let root = doc.root_element();
    match schema_of(root)? {
        SourceSchema::SpaseIugonet => spase_record(root, options),
        SourceSchema::Iso19115 => iso_record(root, options),
    }
}

pub fn parse_spase(document: &str, options: &IngestOptions) -> Result<DatasetRecord, IngestError> {
    let doc = Document::parse(document).map_err(|e| IngestError::Xml(e.to_string()))?;
    let root = doc.root_element();
    match schema_of(root)? {
        SourceSchema::SpaseIugonet => spase_record(root, options),
        SourceSchema::Iso19115 => Err(IngestError::UnsupportedRoot(
            "MD_Metadata is not a SPASE document".into(),
        )),
    }
}

pub fn parse_iso19115(
    document: &str,
    options: &IngestOptions,
) -> Result<DatasetRecord, IngestError> {
    let doc = Document::parse(document).map_err(|e| IngestError::Xml(e.to_string()))?;
    let root = doc.root_element();
    match schema_of(root)? {
        SourceSchema::Iso19115 => iso_record(root, options),
        SourceSchema::SpaseIugonet => Err(IngestError::UnsupportedRoot(
            "Spase is not an ISO 19139 document".into(),
        )),
    }
}

fn spase_record(root: Node<'_, '_>, options: &IngestOptions) -> Result<DatasetRecord, IngestError> {
    let resource = SPASE_RESOURCES
        .iter()
        .find_map(|kind| {
            root.children()
                .find(|c| c.is_element() && c.tag_name().name() == *kind)
        })
        .ok_or_else(|| {
            IngestError::UnsupportedRoot("Spase document without a dataset resource".into())
        })?;
    let kind = if resource.tag_name().name() == "NumericalData" {
        DataKind::TimeSeries
    } else {
        DataKind::Other
    };
    let fields = collect(resource, &options.table().spase_iugonet)?;
    Ok(assemble(fields, SourceSchema::SpaseIugonet, kind, options))
}

fn iso_record(root: Node<'_, '_>, options: &IngestOptions) -> Result<DatasetRecord, IngestError> {
    let fields = collect(root, &options.table().iso19115)?;
    Ok(assemble(fields, SourceSchema::Iso19115, DataKind::Other, options))
}

#[derive(Default)]
struct Fields {
    source_id: Option<String>,
    title_en: Option<String>,
    title_ja: Option<String>,
    description_en: Option<String>,
    description_ja: Option<String>,
    keywords: Vec<String>,
    discipline: Vec<String>,
    contacts: Vec<Contact>,
    start: Option<DateTime<Utc>>,
    end: Option<DateTime<Utc>>,
    site_name: Option<String>,
    coordinates: Option<(Option<f64>, Option<f64>)>,
    display: Vec<(String, String)>,
}

enum Value {
    Text(String),
    Time(DateTime<Utc>),
    Contact(Contact),
    Coordinates(Option<f64>, Option<f64>),
}

impl Value {
    fn display(&self) -> String {
        match self {
            Value::Text(t) => t.clone(),
            Value::Time(t) => t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            Value::Contact(c) => {
                let mut s = c.name.clone();
                if !c.affiliation.is_empty() && c.affiliation != c.name {
                    s.push_str(&format!(", {}", c.affiliation));
                }
                if !c.role.is_empty() {
                    s.push_str(&format!(" ({})", c.role));
                }
                s
            }
            Value::Coordinates(lat, lon) => format!(
                "{}, {}",
                lat.map_or("-".into(), |v| v.to_string()),
                lon.map_or("-".into(), |v| v.to_string())
            ),
        }
    }
}

fn collect(context: Node<'_, '_>, rules: &[MappingRule]) -> Result<Fields, IngestError> {
    let mut f = Fields::default();
    let mut displayed: HashMap<String, usize> = HashMap::new();
    for rule in rules {
        let values = apply(context, rule)?;
        if let (Some(label), false) = (&rule.display, values.is_empty()) {
            let text = values.iter().map(Value::display).collect::<Vec<_>>().join("; ");
            // repeated labels keep the first non-empty rule
            if !displayed.contains_key(label) {
                displayed.insert(label.clone(), f.display.len());
                f.display.push((label.clone(), text));
            }
        }
        for value in values {
            store(&mut f, rule.target, value);
        }
    }
    for rule in rules.iter().filter(|r| r.required) {
        if !is_set(&f, rule.target) {
            return Err(IngestError::MissingRequired(rule.target.field_name().into()));
        }
    }
    Ok(f)
}

fn apply(context: Node<'_, '_>, rule: &MappingRule) -> Result<Vec<Value>, IngestError> {
    let nodes = select(context, &rule.path);
    let texts = |filter: &dyn Fn(Node<'_, '_>) -> bool| -> Vec<Value> {
        nodes
            .iter()
            .filter(|n| filter(**n))
            .map(|n| text_of(*n))
            .filter(|t| !t.is_empty())
            .map(Value::Text)
            .collect()
    };
    Ok(match rule.transform {
        Transform::Text => texts(&|_| true),
        Transform::TextDefaultLang => texts(&|n| !is_japanese(n)),
        Transform::TextJa => texts(&is_japanese),
        Transform::Datetime => {
            let mut out = Vec::new();
            for node in &nodes {
                let text = text_of(*node);
                if text.is_empty() {
                    continue;
                }
                let ts = parse_timestamp(&text).ok_or_else(|| IngestError::InvalidValue {
                    field: rule.target.field_name().into(),
                    value: text.clone(),
                })?;
                out.push(Value::Time(ts));
            }
            out
        }
        Transform::SpaseContact => nodes
            .iter()
            .filter_map(|n| spase_contact(*n))
            .map(Value::Contact)
            .collect(),
        Transform::IsoContact => nodes
            .iter()
            .filter_map(|n| iso_contact(*n))
            .map(Value::Contact)
            .collect(),
        Transform::SpaseLocation => {
            let mut out = Vec::new();
            for node in &nodes {
                let lat = number(*node, "Latitude", rule)?;
                let lon = number(*node, "Longitude", rule)?;
                if lat.is_some() || lon.is_some() {
                    out.push(Value::Coordinates(lat, lon));
                }
            }
            out
        }
        Transform::BboxCenter => {
            let mut out = Vec::new();
            for node in &nodes {
                let west = number(*node, "westBoundLongitude/Decimal", rule)?;
                let east = number(*node, "eastBoundLongitude/Decimal", rule)?;
                let south = number(*node, "southBoundLatitude/Decimal", rule)?;
                let north = number(*node, "northBoundLatitude/Decimal", rule)?;
                let lat = south.zip(north).map(|(s, n)| (s + n) / 2.0);
                let lon = west.zip(east).map(|(w, e)| bbox_lon_center(w, e));
                if lat.is_some() || lon.is_some() {
                    out.push(Value::Coordinates(lat, lon));
                }
            }
            out
        }
    })
}

/// Longitude midpoint, walking east from `west` so boxes crossing the
/// antimeridian stay on the short side.
fn bbox_lon_center(west: f64, east: f64) -> f64 {
    let width = if east >= west { east - west } else { east + 360.0 - west };
    let mut center = west + width / 2.0;
    if center > 180.0 {
        center -= 360.0;
    }
    center
}

fn number(node: Node<'_, '_>, path: &str, rule: &MappingRule) -> Result<Option<f64>, IngestError> {
    match child_text(node, path) {
        None => Ok(None),
        Some(text) => text
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| IngestError::InvalidValue {
                field: rule.target.field_name().into(),
                value: text,
            }),
    }
}

fn spase_contact(node: Node<'_, '_>) -> Option<Contact> {
    let person_id = child_text(node, "PersonID")?;
    let role = select(node, "Role")
        .into_iter()
        .map(text_of)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(", ");
    // a Person resource in the same document supplies the details
    let person = node
        .document()
        .root_element()
        .children()
        .filter(|c| c.is_element() && c.tag_name().name() == "Person")
        .find(|p| child_text(*p, "ResourceID").as_deref() == Some(person_id.as_str()));
    let fallback_name = person_id
        .rsplit('/')
        .next()
        .unwrap_or(&person_id)
        .replace(['.', '_'], " ");
    let (name, affiliation, email) = match person {
        Some(p) => (
            child_text(p, "PersonName").unwrap_or(fallback_name),
            child_text(p, "OrganizationName").unwrap_or_default(),
            child_text(p, "Email"),
        ),
        None => (fallback_name, String::new(), None),
    };
    Some(Contact {
        role,
        name,
        affiliation,
        email,
    })
}

fn iso_contact(node: Node<'_, '_>) -> Option<Contact> {
    let individual = child_text(node, "individualName/CharacterString");
    let organisation = child_text(node, "organisationName/CharacterString");
    let position = child_text(node, "positionName/CharacterString");
    let name = individual
        .clone()
        .or_else(|| organisation.clone())
        .or(position)?;
    let email = child_text(
        node,
        "contactInfo/CI_Contact/address/CI_Address/electronicMailAddress/CharacterString",
    );
    let role = child(node, "role/CI_RoleCode")
        .map(|r| {
            r.attribute("codeListValue")
                .map(str::to_string)
                .unwrap_or_else(|| text_of(r))
        })
        .unwrap_or_default();
    Some(Contact {
        role,
        name,
        affiliation: organisation.unwrap_or_default(),
        email,
    })
}

fn store(f: &mut Fields, target: Target, value: Value) {
    fn first(slot: &mut Option<String>, v: Value) {
        if let (None, Value::Text(t)) = (&slot, v) {
            *slot = Some(t);
        }
    }
    fn push_unique(list: &mut Vec<String>, v: Value) {
        if let Value::Text(t) = v {
            if !list.contains(&t) {
                list.push(t);
            }
        }
    }
    match target {
        Target::SourceId => first(&mut f.source_id, value),
        Target::TitleEn => first(&mut f.title_en, value),
        Target::TitleJa => first(&mut f.title_ja, value),
        Target::DescriptionEn => first(&mut f.description_en, value),
        Target::DescriptionJa => first(&mut f.description_ja, value),
        Target::SiteName => first(&mut f.site_name, value),
        Target::Keywords => push_unique(&mut f.keywords, value),
        Target::Discipline => push_unique(&mut f.discipline, value),
        Target::Contacts => {
            if let Value::Contact(c) = value {
                f.contacts.push(c);
            }
        }
        Target::TemporalStart => {
            if let (None, Value::Time(t)) = (f.start, &value) {
                f.start = Some(*t);
            }
        }
        Target::TemporalEnd => {
            if let (None, Value::Time(t)) = (f.end, &value) {
                f.end = Some(*t);
            }
        }
        Target::SiteCoordinates => {
            if let (None, Value::Coordinates(lat, lon)) = (f.coordinates, &value) {
                f.coordinates = Some((*lat, *lon));
            }
        }
        Target::None => {}
    }
}

fn is_set(f: &Fields, target: Target) -> bool {
    match target {
        Target::SourceId => f.source_id.is_some(),
        Target::TitleEn => f.title_en.is_some(),
        Target::TitleJa => f.title_ja.is_some(),
        Target::DescriptionEn => f.description_en.is_some(),
        Target::DescriptionJa => f.description_ja.is_some(),
        Target::SiteName => f.site_name.is_some(),
        Target::Keywords => !f.keywords.is_empty(),
        Target::Discipline => !f.discipline.is_empty(),
        Target::Contacts => !f.contacts.is_empty(),
        Target::TemporalStart => f.start.is_some(),
        Target::TemporalEnd => f.end.is_some(),
        Target::SiteCoordinates => f.coordinates.is_some(),
        Target::None => !f.display.is_empty(),
    }
}

fn assemble(
    f: Fields,
    schema: SourceSchema,
    inferred: DataKind,
    options: &IngestOptions,
) -> DatasetRecord {
    let source_id = f.source_id.unwrap_or_default();
    let title_en = f.title_en.unwrap_or_default();
    let id = options
        .slug_overrides
        .get(&source_id)
        .cloned()
        .unwrap_or_else(|| slugify(&source_id));
    let description = LocalizedText {
        en: f.description_en.unwrap_or_else(|| title_en.clone()),
        ja: f.description_ja,
    };
    let snippet = LocalizedText {
        en: truncate_snippet(&title_en),
        ja: f.title_ja.as_deref().map(truncate_snippet),
    };
    let temporal_coverage = match (f.start, f.end) {
        (Some(start), Some(end)) => Some(TimeSpan { start, end }),
        (Some(t), None) | (None, Some(t)) => Some(TimeSpan { start: t, end: t }),
        (None, None) => None,
    };
    let site = match (f.site_name, f.coordinates) {
        (None, None) => None,
        (name, coords) => Some(Site {
            name: name.unwrap_or_default(),
            latitude: coords.and_then(|c| c.0),
            longitude: coords.and_then(|c| c.1),
        }),
    };
    let mut record = DatasetRecord {
        thumbnail: format!("thumbnails/{id}.png"),
        config_ref: id.clone(),
        id,
        source_id,
        source_schema: schema,
        title: LocalizedText {
            en: title_en,
            ja: f.title_ja,
        },
        snippet,
        description,
        discipline: f.discipline,
        data_kind: inferred,
        keywords: f.keywords,
        site,
        temporal_coverage,
        contacts: f.contacts,
        metadata_display: f.display,
        access_count: 0,
    };
    apply_kind_override(&mut record, options);
    record
}

fn apply_kind_override(record: &mut DatasetRecord, options: &IngestOptions) {
    if let Some(kind) = options
        .kind_overrides
        .get(&record.source_id)
        .or_else(|| options.kind_overrides.get(&record.id))
    {
        record.data_kind = *kind;
    }
}

/// Lowercase ASCII alphanumerics; every other run becomes one hyphen.
pub fn slugify(source_id: &str) -> String {
    let mut slug = String::with_capacity(source_id.len());
    for c in source_id.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.is_empty() && !slug.ends_with('-') {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    if slug.is_empty() {
        slug.push_str("dataset");
    }
    slug
}

/// Parse every `*.xml` file below `path`.
///
/// Files are processed in path order, so collision suffixes (`x`, `x-2`,
/// ...) are independent of scheduling.
pub fn ingest_directory(path: &Path, options: &IngestOptions) -> std::io::Result<IngestReport> {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    walk(path, &mut files, &mut errors, true)?;
    files.sort();

    let parsed: Vec<(PathBuf, Result<DatasetRecord, IngestError>)> = files
        .into_par_iter()
        .map(|file| {
            let result = std::fs::read_to_string(&file)
                .map_err(|e| IngestError::Io(e.to_string()))
                .and_then(|text| parse_document(&text, options));
            (file, result)
        })
        .collect();

    let mut taken = HashSet::new();
    let mut records = Vec::new();
    for (file, result) in parsed {
        let mut record = match result {
            Ok(r) => r,
            Err(error) => {
                errors.push(FileError { file, error });
                continue;
            }
        };
        let base = record.id.clone();
        let id = unique_slug(&base, &mut taken);
        if id != base {
            record.thumbnail = format!("thumbnails/{id}.png");
            record.config_ref = id.clone();
            record.id = id;
        }
        if let Some(configs) = &options.configs {
            link_config(&mut record, configs);
        }
        apply_kind_override(&mut record, options);
        let report: Vec<ValidationError> = match &options.configs {
            Some(configs) => validate_record(&record, configs),
            None => validate_record(&record, &BTreeMap::new())
                .into_iter()
                .filter(|e| !matches!(e, ValidationError::UnresolvedConfig { .. }))
                .collect(),
        };
        if report.is_empty() {
            records.push(record);
        } else {
            errors.push(FileError {
                file,
                error: IngestError::Invalid(report),
            });
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    errors.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(IngestReport { records, errors })
}

fn unique_slug(base: &str, taken: &mut HashSet<String>) -> String {
    if taken.insert(base.to_string()) {
        return base.to_string();
    }
    (2..)
        .map(|n| format!("{base}-{n}"))
        .find(|candidate| taken.insert(candidate.clone()))
        .expect("unbounded suffix range")
}

/// Attach the config whose `source_id` names this record, else the config
/// whose id equals the slug, and apply its record overlay.
pub fn link_config(record: &mut DatasetRecord, configs: &BTreeMap<String, DatasetConfig>) {
    let config = configs
        .values()
        .find(|c| c.source_id.as_deref() == Some(record.source_id.as_str()))
        .or_else(|| configs.get(&record.id));
    let Some(config) = config else {
        return;
    };
    record.config_ref = config.id.clone();
    let overlay = &config.record;
    if let Some(snippet) = &overlay.snippet {
        record.snippet = snippet.clone();
    }
    if let Some(thumbnail) = &overlay.thumbnail {
        record.thumbnail = thumbnail.clone();
    }
    if !overlay.discipline.is_empty() {
        record.discipline = overlay.discipline.clone();
    }
    for keyword in &overlay.keywords {
        if !record.keywords.contains(keyword) {
            record.keywords.push(keyword.clone());
        }
    }
    if let Some(kind) = overlay.data_kind {
        record.data_kind = kind;
    }
}

fn walk(
    dir: &Path,
    files: &mut Vec<PathBuf>,
    errors: &mut Vec<FileError>,
    top: bool,
) -> std::io::Result<()> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if top => return Err(e),
        Err(e) => {
            errors.push(FileError {
                file: dir.to_path_buf(),
                error: IngestError::Io(e.to_string()),
            });
            return Ok(());
        }
    };
    for entry in entries {
        let entry = entry?;
        let path = entry.path();
        let file_type = entry.file_type()?;
        if file_type.is_dir() {
            walk(&path, files, errors, false)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("xml"))
        {
            files.push(path);
        }
    }
    Ok(())
}
