//! Catalog search, filtering and ordering.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{DatasetRecord, Lang};

pub const MAX_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    And,
    Or,
}

impl std::str::FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(Combine::And),
            "or" => Ok(Combine::Or),
            other => Err(format!("unknown combine mode {other:?}")),
        }
    }
}

/// One toggle combines chips and text terms together.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchQuery {
    /// Space-delimited terms.
    pub text: String,
    pub chips: Vec<String>,
    pub combine: Combine,
    pub lang: Lang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortOrder {
    /// Seeded shuffle of the id-sorted list (ChaCha8, Fisher-Yates).
    Random(u64),
    /// Access count descending, id ascending.
    AccessDesc,
    /// Case-insensitive title in the query language, id ascending.
    TitleAsc,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("invalid page {page} of size {page_size} (page >= 1, 1 <= size <= 100)")]
    InvalidPage { page: usize, page_size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchPage {
    /// Matches before pagination.
    pub total: usize,
    pub items: Vec<DatasetRecord>,
}

struct Criteria {
    terms: Vec<String>,
    chips: Vec<String>,
}

impl Criteria {
    fn new(query: &SearchQuery) -> Self {
        Self {
            terms: query.text.split_whitespace().map(str::to_lowercase).collect(),
            chips: query
                .chips
                .iter()
                .map(|c| c.trim().to_lowercase())
                .filter(|c| !c.is_empty())
                .collect(),
        }
    }

    fn matches(&self, record: &DatasetRecord, combine: Combine, lang: Lang) -> bool {
        if self.terms.is_empty() && self.chips.is_empty() {
            return true;
        }
        let fields: Vec<String> = [
            record.title.get(lang),
            record.snippet.get(lang),
            record.description.get(lang),
        ]
        .into_iter()
        .chain(record.keywords.iter().map(String::as_str))
        .map(str::to_lowercase)
        .collect();
        let tags: Vec<String> = record
            .keywords
            .iter()
            .chain(&record.discipline)
            .map(|t| t.trim().to_lowercase())
            .collect();
        let term_hit = |t: &String| fields.iter().any(|f| f.contains(t.as_str()));
        let chip_hit = |c: &String| tags.iter().any(|t| t == c);
        match combine {
            Combine::And => self.terms.iter().all(term_hit) && self.chips.iter().all(chip_hit),
            Combine::Or => self.terms.iter().any(term_hit) || self.chips.iter().any(chip_hit),
        }
    }
}

/// Whether `record` satisfies `query`; an empty query matches everything.
pub fn matches(record: &DatasetRecord, query: &SearchQuery) -> bool {
    Criteria::new(query).matches(record, query.combine, query.lang)
}

/// Filter, order and paginate. `access_count` supplies the live count used
/// for ordering and copied into the returned records.
pub fn search<'a>(
    records: impl IntoIterator<Item = &'a DatasetRecord>,
    query: &SearchQuery,
    sort: SortOrder,
    page: usize,
    page_size: usize,
    access_count: impl Fn(&DatasetRecord) -> u64,
) -> Result<SearchPage, QueryError> {
    if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(QueryError::InvalidPage { page, page_size });
    }
    let criteria = Criteria::new(query);
    let mut hits: Vec<(&DatasetRecord, u64)> = records
        .into_iter()
        .filter(|r| criteria.matches(r, query.combine, query.lang))
        .map(|r| (r, access_count(r)))
        .collect();
    order(&mut hits, sort, query.lang);
    let total = hits.len();
    let start = (page - 1).saturating_mul(page_size);
    let items = hits
        .into_iter()
        .skip(start)
        .take(page_size)
        .map(|(r, count)| {
            let mut r = r.clone();
            r.access_count = count;
            r
        })
        .collect();
    Ok(SearchPage { total, items })
}

/// Order records by their own `access_count`.
pub fn sort_records(records: Vec<DatasetRecord>, sort: SortOrder, lang: Lang) -> Vec<DatasetRecord> {
    let mut keyed: Vec<(&DatasetRecord, u64)> = records.iter().map(|r| (r, r.access_count)).collect();
    order(&mut keyed, sort, lang);
    keyed.into_iter().map(|(r, _)| r.clone()).collect()
}

fn order(items: &mut [(&DatasetRecord, u64)], sort: SortOrder, lang: Lang) {
    match sort {
        SortOrder::Random(seed) => {
            items.sort_by(|a, b| a.0.id.cmp(&b.0.id));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            items.shuffle(&mut rng);
        }
        SortOrder::AccessDesc => {
            items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        }
        SortOrder::TitleAsc => {
            items.sort_by_cached_key(|(r, _)| (r.title.get(lang).to_lowercase(), r.id.clone()));
        }
    }
}

/// Total order used by [`SortOrder::TitleAsc`], exposed for callers that
/// merge pages.
pub fn title_order(a: &DatasetRecord, b: &DatasetRecord, lang: Lang) -> Ordering {
    a.title
        .get(lang)
        .to_lowercase()
        .cmp(&b.title.get(lang).to_lowercase())
        .then_with(|| a.id.cmp(&b.id))
}
