//! Data-driven element mapping from source XML onto record fields.

use std::sync::OnceLock;

use roxmltree::Node;
use serde::Deserialize;

const DEFAULT_TABLE: &str = include_str!("../../data/mapping.yaml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    SourceId,
    TitleEn,
    TitleJa,
    DescriptionEn,
    DescriptionJa,
    Keywords,
    Discipline,
    Contacts,
    TemporalStart,
    TemporalEnd,
    SiteName,
    SiteCoordinates,
    /// Only feeds the metadata display table.
    None,
}

impl Target {
    /// Field name used in `MissingRequired` errors.
    pub fn field_name(self) -> &'static str {
        match self {
            Target::SourceId => "source_id",
            Target::TitleEn => "title",
            Target::TitleJa => "title.ja",
            Target::DescriptionEn => "description",
            Target::DescriptionJa => "description.ja",
            Target::Keywords => "keywords",
            Target::Discipline => "discipline",
            Target::Contacts => "contacts",
            Target::TemporalStart => "temporal_coverage.start",
            Target::TemporalEnd => "temporal_coverage.end",
            Target::SiteName => "site.name",
            Target::SiteCoordinates => "site.coordinates",
            Target::None => "display",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Text,
    /// First match that is not tagged as Japanese.
    TextDefaultLang,
    /// First match tagged as Japanese by `xml:lang`, `lang` or `locale`.
    TextJa,
    Datetime,
    SpaseContact,
    IsoContact,
    SpaseLocation,
    BboxCenter,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingRule {
    pub path: String,
    pub target: Target,
    pub transform: Transform,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub display: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingTable {
    pub version: u32,
    pub spase_iugonet: Vec<MappingRule>,
    pub iso19115: Vec<MappingRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("malformed mapping table: {0}")]
    Parse(String),
    #[error("mapping table for {schema} has no required rule for {field}")]
    MissingRequiredRule {
        schema: &'static str,
        field: &'static str,
    },
    #[error("rule {path:?} cannot apply {transform:?} to {target:?}")]
    IncompatibleRule {
        path: String,
        transform: Transform,
        target: Target,
    },
}

impl MappingTable {
    pub fn parse(document: &str) -> Result<Self, MappingError> {
        let table: MappingTable =
            serde_yaml::from_str(document).map_err(|e| MappingError::Parse(e.to_string()))?;
        table.check()?;
        Ok(table)
    }

    /// The table shipped with the catalog.
    pub fn builtin() -> &'static MappingTable {
        static TABLE: OnceLock<MappingTable> = OnceLock::new();
        TABLE.get_or_init(|| MappingTable::parse(DEFAULT_TABLE).expect("builtin mapping table"))
    }

    /// Required record fields are mapped, and transforms fit their targets.
    pub fn check(&self) -> Result<(), MappingError> {
        for (schema, rules) in [
            ("spase_iugonet", &self.spase_iugonet),
            ("iso19115", &self.iso19115),
        ] {
            for target in [Target::SourceId, Target::TitleEn] {
                if !rules.iter().any(|r| r.target == target && r.required) {
                    return Err(MappingError::MissingRequiredRule {
                        schema,
                        field: target.field_name(),
                    });
                }
            }
            for rule in rules {
                if !compatible(rule.target, rule.transform) {
                    return Err(MappingError::IncompatibleRule {
                        path: rule.path.clone(),
                        transform: rule.transform,
                        target: rule.target,
                    });
                }
            }
        }
        Ok(())
    }
}

fn compatible(target: Target, transform: Transform) -> bool {
    use Transform as T;
    match target {
        Target::Contacts => matches!(transform, T::SpaseContact | T::IsoContact),
        Target::SiteCoordinates => matches!(transform, T::SpaseLocation | T::BboxCenter),
        Target::TemporalStart | Target::TemporalEnd => transform == T::Datetime,
        Target::None => true,
        _ => matches!(transform, T::Text | T::TextDefaultLang | T::TextJa),
    }
}

/// Elements reached from `context` by a slash-separated path of local
/// names; `*` matches any element and `.` is the context itself. A leading
/// `/` starts from the document, so its first segment names the root.
pub fn select<'a, 'i>(context: Node<'a, 'i>, path: &str) -> Vec<Node<'a, 'i>> {
    let start = if path.starts_with('/') {
        context.document().root()
    } else {
        context
    };
    let mut current = vec![start];
    for segment in path.split('/').filter(|s| !s.is_empty() && *s != ".") {
        let mut next = Vec::new();
        for node in &current {
            next.extend(
                node.children()
                    .filter(|c| c.is_element())
                    .filter(|c| segment == "*" || c.tag_name().name() == segment),
            );
        }
        current = next;
    }
    current
}

/// Descendant text with whitespace runs collapsed.
pub fn text_of(node: Node<'_, '_>) -> String {
    let raw: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect();
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_japanese(node: Node<'_, '_>) -> bool {
    node.attributes().any(|a| {
        let name = a.name();
        let value = a.value().trim_start_matches('#').to_ascii_lowercase();
        match name {
            "lang" => value == "ja" || value.starts_with("ja-") || value == "jpn",
            "locale" => {
                value == "ja"
                    || value == "jpn"
                    || value.ends_with("-ja")
                    || value.ends_with("-jpn")
                    || value.ends_with("_ja")
                    || value.ends_with("_jpn")
            }
            _ => false,
        }
    })
}

pub fn child<'a, 'i>(node: Node<'a, 'i>, path: &str) -> Option<Node<'a, 'i>> {
    select(node, path).into_iter().next()
}

pub fn child_text(node: Node<'_, '_>, path: &str) -> Option<String> {
    child(node, path).map(text_of).filter(|t| !t.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_is_consistent() {
        let table = MappingTable::builtin();
        assert_eq!(table.version, 1);
        assert!(table.spase_iugonet.iter().any(|r| r.path == "ResourceID"));
    }

    #[test]
    fn table_without_required_title_is_rejected() {
        let doc = "version: 1\nspase_iugonet:\n  - { path: ResourceID, target: source_id, transform: text, required: true }\niso19115: []\n";
        assert!(matches!(
            MappingTable::parse(doc),
            Err(MappingError::MissingRequiredRule { field: "title", .. })
        ));
    }

    #[test]
    fn incompatible_transform_is_rejected() {
        let doc = "version: 1\nspase_iugonet:\n  - { path: ResourceID, target: source_id, transform: text, required: true }\n  - { path: N, target: title_en, transform: datetime, required: true }\niso19115: []\n";
        assert!(matches!(
            MappingTable::parse(doc),
            Err(MappingError::IncompatibleRule { .. })
        ));
    }

    #[test]
    fn unknown_transform_is_parse_error() {
        let doc = "version: 1\nspase_iugonet:\n  - { path: X, target: source_id, transform: shout }\niso19115: []\n";
        assert!(matches!(MappingTable::parse(doc), Err(MappingError::Parse(_))));
    }

    #[test]
    fn path_selection_and_wildcards() {
        let doc = roxmltree::Document::parse(
            "<r><a><b>1</b><b> 2\n  x </b></a><c><b>3</b></c></r>",
        )
        .unwrap();
        let root = doc.root_element();
        let texts: Vec<String> = select(root, "*/b").into_iter().map(text_of).collect();
        assert_eq!(texts, ["1", "2 x", "3"]);
        assert_eq!(select(root, "a/b").len(), 2);
        assert_eq!(select(root, ".").len(), 1);
        assert!(select(root, "zz/b").is_empty());
        let inner = select(root, "c").pop().unwrap();
        assert_eq!(select(inner, "/r/a/b").len(), 2);
    }

    #[test]
    fn japanese_detection() {
        let doc = roxmltree::Document::parse(
            r##"<r><t xml:lang="ja">あ</t><t>a</t><l locale="#locale-ja">い</l><l locale="#locale-en">b</l></r>"##,
        )
        .unwrap();
        let flags: Vec<bool> = doc
            .root_element()
            .children()
            .filter(|c| c.is_element())
            .map(is_japanese)
            .collect();
        assert_eq!(flags, [true, false, true, false]);
    }
}
