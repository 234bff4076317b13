//! Seeded synthetic workloads shared by the benchmarks.

use chrono::{DateTime, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdcat_core::convert::TimeSeries;
use rdcat_core::model::{DataKind, DatasetRecord, LocalizedText, SourceSchema};
use rdcat_core::relatedness::Histogram;

const WORDS: &[&str] = &[
    "aurora", "magnetometer", "riometer", "ionosphere", "penguin", "specimen", "Syowa Station", "ice core",
    "imaging", "polar", "solar wind", "radar", "survey", "meteorite sample", "camera", "sea ice",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1000.0..1000.0)).collect()
}

pub fn random_title(rng: &mut impl Rng) -> String {
    let n = rng.random_range(2..7);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn random_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let title = random_title(&mut rng);
            let keywords = (0..rng.random_range(0..4)).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect();
            DatasetRecord {
                id: format!("dataset-{i:05}"),
                source_id: format!("synthetic:{i}"),
                source_schema: SourceSchema::SpaseIugonet,
                title: LocalizedText::en(title.clone()),
                snippet: LocalizedText::en(format!("{title} snippet")),
                description: LocalizedText::en(random_title(&mut rng)),
                discipline: vec!["space and upper atmosphere".into()],
                data_kind: DataKind::TimeSeries,
                keywords,
                site: None,
                temporal_coverage: None,
                contacts: Vec::new(),
                thumbnail: String::new(),
                metadata_display: Vec::new(),
                access_count: rng.random_range(0..50),
                config_ref: String::new(),
            }
        })
        .collect()
}

/// Minute samples starting at `start`.
pub fn random_series(rng: &mut impl Rng, start: DateTime<Utc>, len: usize) -> TimeSeries {
    let times = (0..len).map(|i| start + TimeDelta::minutes(i as i64)).collect();
    TimeSeries::new(times, random_vector(rng, len)).expect("increasing minutes")
}

pub fn random_histogram(rng: &mut impl Rng, bins: usize) -> Histogram {
    let mut positions: Vec<f64> = (0..bins).map(|i| i as f64 + rng.random_range(0.0..0.5)).collect();
    positions.sort_by(f64::total_cmp);
    let mut masses: Vec<f64> = (0..bins).map(|_| rng.random_range(0.0..1.0)).collect();
    masses[0] += 0.01;
    Histogram::positional(positions, masses).expect("valid histogram")
}
