//! Per-dataset YAML configuration: filename templates, granularity, format
//! and display switches.

use serde::{Deserialize, Serialize};

use crate::model::{DataKind, LocalizedText};
use crate::relatedness::Histogram;
use crate::registry::template::{Template, TemplateError, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Hourly,
    Daily,
    Monthly,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Netcdf,
    Cdf,
    #[default]
    Other,
}

/// Curated catalog fields that the source metadata does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RecordOverlay {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<LocalizedText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discipline: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_kind: Option<DataKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub id: String,
    pub data_url_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_url_template: Option<String>,
    pub granularity: Granularity,
    #[serde(default)]
    pub format: DataFormat,
    #[serde(default = "default_true")]
    pub show_visualized: bool,
    #[serde(default = "default_true")]
    pub download_enabled: bool,
    #[serde(default)]
    pub conversion_enabled: bool,
    /// Availability manifest, relative to the config directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_path: Option<String>,
    /// Variable read from each granule when computing relatedness scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_variable: Option<String>,
    /// Composition histogram scored by EMD against other compositions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition: Option<Histogram>,
    /// Fixed images for static (specimen-type) datasets.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub static_visuals: Vec<String>,
    /// Source identifier this config applies to; defaults to matching by slug.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "is_default_overlay")]
    pub record: RecordOverlay,
}

fn default_true() -> bool {
    true
}

fn is_default_overlay(overlay: &RecordOverlay) -> bool {
    *overlay == RecordOverlay::default()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config document: {0}")]
    Parse(String),
    #[error("invalid template {template:?}: {source}")]
    InvalidTemplate {
        template: String,
        #[source]
        source: TemplateError,
    },
    #[error("inconsistent config: {0}")]
    Inconsistent(String),
}

impl DatasetConfig {
    pub fn data_template(&self) -> Result<Template, TemplateError> {
        Template::parse(&self.data_url_template)
    }

    pub fn visual_template(&self) -> Option<Result<Template, TemplateError>> {
        self.visual_url_template.as_deref().map(Template::parse)
    }

    /// Re-check every invariant; used by `load` and by snapshot integrity checks.
    pub fn check(&self) -> Result<(), ConfigError> {
        let data = parse_template(&self.data_url_template)?;
        if !is_absolute_url(&self.data_url_template) {
            return Err(ConfigError::Inconsistent(format!(
                "data_url_template {:?} is not an absolute URL",
                self.data_url_template
            )));
        }
        let mut templates = vec![("data_url_template", data)];
        if let Some(visual) = &self.visual_url_template {
            templates.push(("visual_url_template", parse_template(visual)?));
        }
        for (field, template) in &templates {
            check_tokens_for_granularity(field, template, self.granularity)?;
        }
        if self.conversion_enabled && self.format != DataFormat::Netcdf {
            return Err(ConfigError::Inconsistent(format!(
                "conversion_enabled requires format netcdf, got {:?}",
                self.format
            )));
        }
        Ok(())
    }
}

fn parse_template(template: &str) -> Result<Template, ConfigError> {
    Template::parse(template).map_err(|source| ConfigError::InvalidTemplate {
        template: template.to_string(),
        source,
    })
}

fn is_absolute_url(template: &str) -> bool {
    match template.split_once("://") {
        Some((scheme, rest)) => {
            !rest.is_empty()
                && !scheme.is_empty()
                && scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        None => false,
    }
}

fn check_tokens_for_granularity(
    field: &str,
    template: &Template,
    granularity: Granularity,
) -> Result<(), ConfigError> {
    let finest_allowed: &[Token] = match granularity {
        Granularity::Static => &[],
        Granularity::Monthly => &[Token::Year4, Token::Year2, Token::Month],
        Granularity::Daily => &[Token::Year4, Token::Year2, Token::Month, Token::Day],
        Granularity::Hourly => &[
            Token::Year4,
            Token::Year2,
            Token::Month,
            Token::Day,
            Token::Hour,
        ],
    };
    for token in template.tokens() {
        if !finest_allowed.contains(&token) {
            return Err(ConfigError::Inconsistent(format!(
                "{field} uses {} which is finer than {granularity:?} granularity",
                token.as_str()
            )));
        }
    }
    if granularity != Granularity::Static && field == "data_url_template" && !template.has_tokens()
    {
        return Err(ConfigError::Inconsistent(format!(
            "{field} has no time tokens but granularity is {granularity:?}"
        )));
    }
    Ok(())
}

/// Parse one dataset configuration document.
///
/// `fallback_id` is used when the document has no `id` field (typically the
/// file stem).
pub fn load_dataset_config(document: &str, fallback_id: &str) -> Result<DatasetConfig, ConfigError> {
    let mut config: DatasetConfig =
        serde_yaml::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if config.id.trim().is_empty() {
        config.id = fallback_id.to_string();
    }
    config.check()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn daily_template_document() {
        let doc = "data_url_template: \"https://h/%YYYY-%mm-%dd.nc\"\ngranularity: daily\n";
        let config = load_dataset_config(doc, "syowa").unwrap();
        assert_eq!(config.id, "syowa");
        assert_eq!(config.data_url_template, "https://h/%YYYY-%mm-%dd.nc");
        assert_eq!(config.granularity, Granularity::Daily);
        assert!(config.show_visualized);
        assert!(config.download_enabled);
        assert!(!config.conversion_enabled);
        assert_eq!(config.format, DataFormat::Other);
    }

    #[test]
    fn explicit_id_wins() {
        let doc = "id: mag\ndata_url_template: https://h/%YYYY.nc\ngranularity: monthly\nshow_visualized: false\n";
        let config = load_dataset_config(doc, "stem").unwrap();
        assert_eq!(config.id, "mag");
        assert!(!config.show_visualized);
    }

    #[test]
    fn unknown_token_is_invalid_template() {
        let doc = "data_url_template: https://h/%QQ.nc\ngranularity: daily\n";
        assert!(matches!(
            load_dataset_config(doc, "x"),
            Err(ConfigError::InvalidTemplate { .. })
        ));
    }

    #[test]
    fn static_with_time_tokens_is_inconsistent() {
        let doc = "data_url_template: https://h/%YYYY.nc\ngranularity: static\n";
        assert!(matches!(
            load_dataset_config(doc, "x"),
            Err(ConfigError::Inconsistent(_))
        ));
    }

    #[test]
    fn conversion_requires_netcdf() {
        let doc = "data_url_template: https://h/%YYYY%mm%dd.cdf\ngranularity: daily\nformat: cdf\nconversion_enabled: true\n";
        assert!(matches!(
            load_dataset_config(doc, "x"),
            Err(ConfigError::Inconsistent(_))
        ));
    }

    #[test]
    fn monthly_rejects_day_token_and_relative_url() {
        let doc = "data_url_template: https://h/%YYYY%mm%dd.nc\ngranularity: monthly\n";
        assert!(matches!(
            load_dataset_config(doc, "x"),
            Err(ConfigError::Inconsistent(_))
        ));
        let doc = "data_url_template: data/%YYYY.nc\ngranularity: monthly\n";
        assert!(matches!(
            load_dataset_config(doc, "x"),
            Err(ConfigError::Inconsistent(_))
        ));
    }

    #[test]
    fn malformed_yaml_is_parse_error() {
        assert!(matches!(
            load_dataset_config("granularity: [daily", "x"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            load_dataset_config("data_url_template: https://h/x\ngranularity: weekly\n", "x"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn record_overlay_is_read() {
        let doc = r#"
data_url_template: "https://h/specimen.zip"
granularity: static
static_visuals: ["photos/penguin-1.jpg", "photos/penguin-2.jpg"]
record:
  data_kind: specimen
  snippet: { en: "Penguin specimens", ja: "ペンギン標本" }
  thumbnail: thumbs/penguin.jpg
"#;
        let config = load_dataset_config(doc, "penguin").unwrap();
        assert_eq!(config.record.data_kind, Some(DataKind::Specimen));
        assert_eq!(config.static_visuals.len(), 2);
        assert_eq!(
            config.record.snippet.as_ref().unwrap().ja.as_deref(),
            Some("ペンギン標本")
        );
    }
}
