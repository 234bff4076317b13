//! Pairwise dataset relatedness and the "related datasets" ranking.

pub mod align;
pub mod emd;
pub mod pearson;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convert::TimeSeries;
pub use align::{align_series, Aggregation, AlignmentSpec};
pub use emd::{emd, transport, Bins, Ground, Histogram};
pub use pearson::pearson;

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelatednessError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("series overlap in only {pairs} aligned points")]
    NoOverlap { pairs: usize },
    #[error("signature {rows}x{cols} exceeds the {max}x{max} limit")]
    SizeLimit { rows: usize, cols: usize, max: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pearson,
    Emd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pearson => "pearson",
            Method::Emd => "emd",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson" => Ok(Method::Pearson),
            "emd" => Ok(Method::Emd),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// A scored pair with `dataset_a < dataset_b`; `score` lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessScore {
    pub dataset_a: String,
    pub dataset_b: String,
    pub score: f64,
    pub method: Method,
    /// Pearson r, or the raw EMD.
    pub detail: f64,
}

/// Data a dataset contributes to scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoringData {
    Series(TimeSeries),
    Composition(Histogram),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringInput {
    pub id: String,
    pub data: ScoringData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub alignment: AlignmentSpec,
    pub ground: Ground,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            alignment: AlignmentSpec::default(),
            ground: Ground::Absolute,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFailure {
    pub dataset_a: String,
    pub dataset_b: String,
    pub error: RelatednessError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    /// Sorted by `(dataset_a, dataset_b)`.
    pub scores: Vec<RelatednessScore>,
    /// Skipped pairs, in the same order.
    pub failures: Vec<PairFailure>,
}

/// Score every same-kind pair: `|r|` for time series, `1/(1 + d/σ)` for
/// compositions where σ is the median pairwise EMD of the corpus.
///
/// Output is independent of `options.jobs`.
pub fn compute_score_matrix(
    inputs: &[ScoringInput],
    options: &ScoreOptions,
) -> Result<ScoreReport, RelatednessError> {
    options.alignment.check()?;
    let mut sorted: Vec<&ScoringInput> = inputs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(RelatednessError::InvalidParameter(format!(
            "duplicate dataset id {:?}",
            w[0].id
        )));
    }

    let series: Vec<(&str, &TimeSeries)> = sorted
        .iter()
        .filter_map(|i| match &i.data {
            ScoringData::Series(s) => Some((i.id.as_str(), s)),
            _ => None,
        })
        .collect();
    let compositions: Vec<(&str, &Histogram)> = sorted
        .iter()
        .filter_map(|i| match &i.data {
            ScoringData::Composition(h) => Some((i.id.as_str(), h)),
            _ => None,
        })
        .collect();

    let run = || {
        let pearson_pairs: Vec<(usize, usize)> = pairs(series.len());
        let pearson_results: Vec<Result<f64, RelatednessError>> = pearson_pairs
            .par_iter()
            .map(|&(i, j)| {
                let (x, y) = align_series(series[i].1, series[j].1, &options.alignment)?;
                pearson(&x, &y)
            })
            .collect();
        let emd_pairs: Vec<(usize, usize)> = pairs(compositions.len());
        let emd_results: Vec<Result<f64, RelatednessError>> = emd_pairs
            .par_iter()
            .map(|&(i, j)| emd(compositions[i].1, compositions[j].1, &options.ground))
            .collect();
        (pearson_pairs, pearson_results, emd_pairs, emd_results)
    };
    let (pearson_pairs, pearson_results, emd_pairs, emd_results) = if options.jobs == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| RelatednessError::InvalidParameter(e.to_string()))?
            .install(run)
    };

    let mut report = ScoreReport::default();
    for (&(i, j), result) in pearson_pairs.iter().zip(pearson_results) {
        let (a, b) = (series[i].0, series[j].0);
        match result {
            Ok(r) => report.scores.push(RelatednessScore {
                dataset_a: a.to_string(),
                dataset_b: b.to_string(),
                score: r.abs(),
                method: Method::Pearson,
                detail: r,
            }),
            Err(error) => {
                tracing::debug!(a, b, %error, "pair skipped");
                report.failures.push(PairFailure {
                    dataset_a: a.to_string(),
                    dataset_b: b.to_string(),
                    error,
                });
            }
        }
    }

    let distances: Vec<f64> = emd_results.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
    let sigma = emd_scale(&distances);
    for (&(i, j), result) in emd_pairs.iter().zip(emd_results) {
        let (a, b) = (compositions[i].0, compositions[j].0);
        match result {
            Ok(d) => report.scores.push(RelatednessScore {
                dataset_a: a.to_string(),
                dataset_b: b.to_string(),
                score: emd_score(d, sigma),
                method: Method::Emd,
                detail: d,
            }),
            Err(error) => {
                tracing::debug!(a, b, %error, "pair skipped");
                report.failures.push(PairFailure {
                    dataset_a: a.to_string(),
                    dataset_b: b.to_string(),
                    error,
                });
            }
        }
    }
    report
        .scores
        .sort_by(|x, y| (&x.dataset_a, &x.dataset_b).cmp(&(&y.dataset_a, &y.dataset_b)));
    report
        .failures
        .sort_by(|x, y| (&x.dataset_a, &x.dataset_b).cmp(&(&y.dataset_a, &y.dataset_b)));
    Ok(report)
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

/// Median pairwise distance; falls back to the mean positive distance when
/// the median is zero. `None` when every distance is zero.
pub fn emd_scale(distances: &[f64]) -> Option<f64> {
    if distances.is_empty() {
        return None;
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    if median > 0.0 {
        return Some(median);
    }
    let positive: Vec<f64> = sorted.into_iter().filter(|d| *d > 0.0).collect();
    if positive.is_empty() {
        None
    } else {
        Some(positive.iter().sum::<f64>() / positive.len() as f64)
    }
}

fn emd_score(d: f64, sigma: Option<f64>) -> f64 {
    match sigma {
        Some(s) => 1.0 / (1.0 + d / s),
        None => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedEntry {
    pub id: String,
    pub score: f64,
    pub method: Method,
}

/// Neighbours of `id` with `score >= threshold`, best first, ties by id,
/// at most `k`. `is_known` decides whether `id` exists in the catalog.
pub fn top_related(
    scores: &[RelatednessScore],
    id: &str,
    k: usize,
    threshold: f64,
    is_known: impl Fn(&str) -> bool,
) -> Result<Vec<RelatedEntry>, RelatednessError> {
    if k == 0 {
        return Err(RelatednessError::InvalidParameter("k must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RelatednessError::InvalidParameter(
            "threshold must lie in [0, 1]".into(),
        ));
    }
    if !is_known(id) {
        return Err(RelatednessError::UnknownDataset(id.to_string()));
    }
    let mut out: Vec<RelatedEntry> = scores
        .iter()
        .filter(|s| s.score >= threshold)
        .filter_map(|s| {
            let other = if s.dataset_a == id {
                &s.dataset_b
            } else if s.dataset_b == id {
                &s.dataset_a
            } else {
                return None;
            };
            Some(RelatedEntry {
                id: other.clone(),
                score: s.score,
                method: s.method,
            })
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    out.truncate(k);
    Ok(out)
}

pub const SCORE_TSV_HEADER: &str = "a_id\tb_id\tmethod\tscore\tdetail";

/// Tab-separated export with a header line. Floats use the shortest
/// representation that reads back to the same value.
pub fn scores_to_tsv(scores: &[RelatednessScore]) -> String {
    let mut out = String::from(SCORE_TSV_HEADER);
    out.push('\n');
    for s in scores {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.dataset_a, s.dataset_b, s.method, s.score, s.detail
        ));
    }
    out
}

pub fn scores_from_tsv(text: &str) -> Result<Vec<RelatednessScore>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SCORE_TSV_HEADER => {}
        _ => return Err(format!("missing header {SCORE_TSV_HEADER:?}")),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [a, b, method, score, detail] = fields[..] else {
            return Err(format!("line {}: expected 5 fields", n + 1));
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("line {}: bad number {v:?}", n + 1))
        };
        out.push(RelatednessScore {
            dataset_a: a.to_string(),
            dataset_b: b.to_string(),
            method: method.parse().map_err(|e| format!("line {}: {e}", n + 1))?,
            score: num(score)?,
            detail: num(detail)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeDelta, TimeZone, Utc};

    fn series(values: &[f64]) -> TimeSeries {
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let times = (0..values.len())
            .map(|i| t0 + TimeDelta::minutes(i as i64))
            .collect();
        TimeSeries::new(times, values.to_vec()).unwrap()
    }

    fn wave(n: usize, phase: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.3 + phase).sin()).collect()
    }

    fn input(id: &str, data: ScoringData) -> ScoringInput {
        ScoringInput {
            id: id.into(),
            data,
        }
    }

    fn score(a: &str, b: &str, s: f64) -> RelatednessScore {
        RelatednessScore {
            dataset_a: a.into(),
            dataset_b: b.into(),
            score: s,
            method: Method::Pearson,
            detail: s,
        }
    }

    #[test]
    fn identical_series_score_one() {
        let s = series(&wave(50, 0.0));
        let inputs: Vec<ScoringInput> = ["c", "a", "b"]
            .iter()
            .map(|id| input(id, ScoringData::Series(s.clone())))
            .collect();
        let report = compute_score_matrix(&inputs, &ScoreOptions::default()).unwrap();
        let got: Vec<(&str, &str)> = report
            .scores
            .iter()
            .map(|s| (s.dataset_a.as_str(), s.dataset_b.as_str()))
            .collect();
        assert_eq!(got, [("a", "b"), ("a", "c"), ("b", "c")]);
        assert!(report.scores.iter().all(|s| (s.score - 1.0).abs() < 1e-12));
    }

    #[test]
    fn differing_kinds_are_not_scored() {
        let inputs = vec![
            input("ts", ScoringData::Series(series(&wave(50, 0.0)))),
            input("specimen", ScoringData::None),
            input(
                "rock",
                ScoringData::Composition(Histogram::positional(vec![0.0], vec![1.0]).unwrap()),
            ),
        ];
        let report = compute_score_matrix(&inputs, &ScoreOptions::default()).unwrap();
        assert!(report.scores.is_empty());
        assert!(report.failures.is_empty());
    }

    #[test]
    fn anticorrelation_scores_high() {
        let a = wave(40, 0.0);
        let b: Vec<f64> = a.iter().map(|v| -3.0 * v + 1.0).collect();
        let inputs = vec![
            input("a", ScoringData::Series(series(&a))),
            input("b", ScoringData::Series(series(&b))),
        ];
        let report = compute_score_matrix(&inputs, &ScoreOptions::default()).unwrap();
        assert!((report.scores[0].score - 1.0).abs() < 1e-12);
        assert!((report.scores[0].detail + 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_overlap_is_a_failure_not_a_score() {
        let inputs = vec![
            input("a", ScoringData::Series(series(&wave(5, 0.0)))),
            input("b", ScoringData::Series(series(&wave(5, 1.0)))),
        ];
        let report = compute_score_matrix(&inputs, &ScoreOptions::default()).unwrap();
        assert!(report.scores.is_empty());
        assert_eq!(report.failures.len(), 1);
    }

    fn compositions() -> Vec<ScoringInput> {
        let masses = [
            [0.5, 0.3, 0.2, 0.0],
            [0.1, 0.2, 0.3, 0.4],
            [0.25, 0.25, 0.25, 0.25],
            [0.0, 0.0, 0.1, 0.9],
        ];
        masses
            .iter()
            .enumerate()
            .map(|(i, m)| {
                input(
                    &format!("comp-{i}"),
                    ScoringData::Composition(
                        Histogram::positional(vec![0.0, 1.0, 2.0, 3.0], m.to_vec()).unwrap(),
                    ),
                )
            })
            .collect()
    }

    #[test]
    fn composition_scores_match_sequential_recomputation() {
        let inputs = compositions();
        let report = compute_score_matrix(&inputs, &ScoreOptions::default()).unwrap();
        assert_eq!(report.scores.len(), 6);

        // sequential oracle: direct CDF sums, sorted median
        let cdf_distance = |p: &Histogram, q: &Histogram| {
            let (a, b) = (p.normalized(), q.normalized());
            let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0);
            for k in 0..3 {
                ca += a[k];
                cb += b[k];
                d += f64::abs(ca - cb);
            }
            d
        };
        let hist = |i: usize| match &inputs[i].data {
            ScoringData::Composition(h) => h.clone(),
            _ => unreachable!(),
        };
        let mut ds = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                ds.push(cdf_distance(&hist(i), &hist(j)));
            }
        }
        let mut sorted = ds.clone();
        sorted.sort_by(f64::total_cmp);
        let sigma = (sorted[2] + sorted[3]) / 2.0;
        for (s, d) in report.scores.iter().zip(&ds) {
            assert_eq!(s.method, Method::Emd);
            assert!((s.detail - d).abs() < 1e-12);
            assert!((s.score - 1.0 / (1.0 + d / sigma)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&s.score));
        }
    }

    #[test]
    fn schedule_independent() {
        let mut inputs = compositions();
        for i in 0..12 {
            inputs.push(input(
                &format!("ts-{i:02}"),
                ScoringData::Series(series(&wave(60, i as f64 * 0.4))),
            ));
        }
        let one = compute_score_matrix(
            &inputs,
            &ScoreOptions {
                jobs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let many = compute_score_matrix(
            &inputs,
            &ScoreOptions {
                jobs: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one, many);
        assert_eq!(one.scores.len(), 6 + 66);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let inputs = vec![input("a", ScoringData::None), input("a", ScoringData::None)];
        assert!(compute_score_matrix(&inputs, &ScoreOptions::default()).is_err());
    }

    #[test]
    fn scale_fallbacks() {
        assert_eq!(emd_scale(&[]), None);
        assert_eq!(emd_scale(&[0.0, 0.0]), None);
        assert_eq!(emd_scale(&[0.0, 0.0, 0.0, 2.0, 4.0]), Some(3.0));
        assert_eq!(emd_scale(&[1.0, 3.0]), Some(2.0));
        assert_eq!(emd_score(0.0, None), 1.0);
        assert_eq!(emd_score(2.0, Some(2.0)), 0.5);
    }

    #[test]
    fn top_related_filters_and_sorts() {
        let scores = vec![score("a", "b", 0.9), score("a", "c", 0.6), score("a", "d", 0.75)];
        let known = |id: &str| ["a", "b", "c", "d", "e"].contains(&id);
        let got = top_related(&scores, "a", 10, 0.7, known).unwrap();
        let ids: Vec<&str> = got.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["b", "d"]);
        let from_b = top_related(&scores, "b", 10, 0.7, known).unwrap();
        assert_eq!(from_b[0].id, "a");
        assert!(top_related(&scores, "e", 10, 0.7, known).unwrap().is_empty());
        assert_eq!(
            top_related(&scores, "zz", 10, 0.7, known),
            Err(RelatednessError::UnknownDataset("zz".into()))
        );
        assert!(top_related(&scores, "a", 0, 0.7, known).is_err());
        assert!(top_related(&scores, "a", 1, 1.5, known).is_err());
    }

    #[test]
    fn top_related_ties_by_slug() {
        let scores = vec![
            score("m", "x", 0.8),
            score("b", "m", 0.8),
            score("k", "m", 0.8),
            score("a", "m", 0.95),
        ];
        let run = || {
            top_related(&scores, "m", 3, 0.7, |_| true)
                .unwrap()
                .into_iter()
                .map(|e| e.id)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), ["a", "b", "k"]);
        assert_eq!(run(), run());
    }

    #[test]
    fn tsv_roundtrip() {
        let mut scores = vec![score("a", "b", 0.1 + 0.2), score("a", "c", 1.0)];
        scores[1].method = Method::Emd;
        scores[1].detail = 12.5;
        let text = scores_to_tsv(&scores);
        assert!(text.starts_with("a_id\tb_id\tmethod\tscore\tdetail\n"));
        assert!(text.contains("a\tc\temd\t1\t12.5\n"));
        assert_eq!(scores_from_tsv(&text).unwrap(), scores);
        assert!(scores_from_tsv("nope\n").is_err());
        assert!(scores_from_tsv(&format!("{SCORE_TSV_HEADER}\na\tb\n")).is_err());
    }
}
