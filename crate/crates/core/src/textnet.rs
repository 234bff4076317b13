//! Term co-occurrence network over dataset titles.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PHRASES: &str = include_str!("../data/phrases.txt");
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

pub const DEFAULT_MIN_COUNT: usize = 2;
pub const DEFAULT_MIN_CO: usize = 2;

/// Splits a title into terms. Implementations must be deterministic.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, title: &str) -> Vec<String>;
}

/// Lowercases, splits into words (alphanumeric runs joined by single
/// hyphens), drops stopwords and one-character words, then merges
/// dictionary phrases by greedy longest match.
///
/// Phrases are normalized with the same rules, so a phrase term is its
/// surviving words joined by one space and re-tokenizing the joined output
/// reproduces it.
#[derive(Debug, Clone, Default)]
pub struct RuleTokenizer {
    phrases: HashSet<Vec<String>>,
    longest_phrase: usize,
    stopwords: HashSet<String>,
}

impl RuleTokenizer {
    pub fn new<P, S>(phrases: P, stopwords: S) -> Self
    where
        P: IntoIterator,
        P::Item: AsRef<str>,
        S: IntoIterator,
        S::Item: AsRef<str>,
    {
        let stopwords: HashSet<String> = stopwords
            .into_iter()
            .flat_map(|s| words(&s.as_ref().to_lowercase()))
            .collect();
        let mut tokenizer = Self {
            phrases: HashSet::new(),
            longest_phrase: 0,
            stopwords,
        };
        for phrase in phrases {
            let normalized = tokenizer.filtered_words(phrase.as_ref());
            if normalized.len() >= 2 {
                tokenizer.longest_phrase = tokenizer.longest_phrase.max(normalized.len());
                tokenizer.phrases.insert(normalized);
            }
        }
        tokenizer
    }

    /// Builtin phrase dictionary and stopword list.
    pub fn builtin() -> Self {
        Self::new(parse_list(DEFAULT_PHRASES), parse_list(DEFAULT_STOPWORDS))
    }

    fn filtered_words(&self, text: &str) -> Vec<String> {
        words(&text.to_lowercase())
            .into_iter()
            .filter(|w| w.chars().count() >= 2 && !self.stopwords.contains(w))
            .collect()
    }
}

impl Tokenizer for RuleTokenizer {
    fn tokenize(&self, title: &str) -> Vec<String> {
        let tokens = self.filtered_words(title);
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.longest_phrase.min(tokens.len() - i);
            let matched = (2..=longest)
                .rev()
                .find(|len| self.phrases.contains(&tokens[i..i + len]));
            match matched {
                Some(len) => {
                    out.push(tokens[i..i + len].join(" "));
                    i += len;
                }
                None => {
                    out.push(tokens[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

/// Maximal runs of alphanumerics, where single hyphens between
/// alphanumerics stay inside the word.
fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if c == '-'
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
            && !current.ends_with('-')
        {
            current.push(c);
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// One entry per line; blank lines and `#` comments are skipped.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Tokenize with an explicit phrase dictionary and stopword list.
pub fn tokenize_title(title: &str, phrases: &[String], stopwords: &[String]) -> Vec<String> {
    RuleTokenizer::new(phrases, stopwords).tokenize(title)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub term: String,
    /// Titles containing the term.
    pub count: usize,
    /// `count / total_titles`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub term_a: String,
    pub term_b: String,
    pub co_count: usize,
}

/// Nodes sorted by count descending then term; edges by co_count
/// descending then `(term_a, term_b)`, with `term_a < term_b`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CooccurrenceGraph {
    pub total_titles: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

pub fn build_cooccurrence<T: AsRef<str> + Sync>(
    titles: &[T],
    tokenizer: &dyn Tokenizer,
    min_count: usize,
    min_co: usize,
) -> CooccurrenceGraph {
    let term_sets: Vec<BTreeSet<String>> = titles
        .par_iter()
        .map(|t| tokenizer.tokenize(t.as_ref()).into_iter().collect())
        .collect();

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for set in &term_sets {
        for term in set {
            *counts.entry(term.as_str()).or_default() += 1;
        }
    }
    let kept: HashSet<&str> = counts
        .iter()
        .filter(|(_, c)| **c >= min_count)
        .map(|(t, _)| *t)
        .collect();

    let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for set in &term_sets {
        let terms: Vec<&str> = set
            .iter()
            .map(String::as_str)
            .filter(|t| kept.contains(t))
            .collect();
        for (i, a) in terms.iter().enumerate() {
            for b in &terms[i + 1..] {
                *pair_counts.entry((a, b)).or_default() += 1;
            }
        }
    }

    let total = titles.len();
    let mut nodes: Vec<GraphNode> = counts
        .iter()
        .filter(|(t, _)| kept.contains(*t))
        .map(|(t, c)| GraphNode {
            term: t.to_string(),
            count: *c,
            rate: *c as f64 / total as f64,
        })
        .collect();
    nodes.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));

    let mut edges: Vec<GraphEdge> = pair_counts
        .into_iter()
        .filter(|(_, c)| *c >= min_co)
        .map(|((a, b), c)| GraphEdge {
            term_a: a.to_string(),
            term_b: b.to_string(),
            co_count: c,
        })
        .collect();
    edges.sort_by(|x, y| {
        y.co_count
            .cmp(&x.co_count)
            .then_with(|| (&x.term_a, &x.term_b).cmp(&(&y.term_a, &y.term_b)))
    });

    CooccurrenceGraph {
        total_titles: total,
        nodes,
        edges,
    }
}

/// JSON document served by the network endpoint.
pub fn export_graph(graph: &CooccurrenceGraph) -> String {
    let mut text = serde_json::to_string_pretty(graph).expect("graph serializes");
    text.push('\n');
    text
}

pub fn import_graph(text: &str) -> Result<CooccurrenceGraph, serde_json::Error> {
    serde_json::from_str(text)
}
