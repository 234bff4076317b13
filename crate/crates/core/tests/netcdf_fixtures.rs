//! Classic-format reader and ASCII converter against files written by an
//! independent implementation (see `fixtures/netcdf/generate.py`).

use std::fs;
use std::panic;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdcat_core::convert::{extract_timeseries, read_netcdf_classic, to_ascii, AsciiOptions, ConvertError, FormatVersion};
use serde_json::Value;

#[path = "support/ncdump.rs"]
mod ncdump;

use ncdump::dump;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/netcdf")
}

fn fixture(name: &str) -> Vec<u8> {
    fs::read(fixture_dir().join(name)).unwrap()
}

fn nc_fixtures() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".nc"))
        .collect();
    names.sort();
    names
}

#[test]
fn every_fixture_matches_reference_dump() {
    let names = nc_fixtures();
    assert!(names.len() >= 8, "fixtures missing: {names:?}");
    for name in names {
        let ds = read_netcdf_classic(&fixture(&name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let reference: Value =
            serde_json::from_slice(&fixture(&name.replace(".nc", ".json"))).unwrap();
        assert_eq!(dump(&ds), reference, "{name}");
    }
}

#[test]
fn offset64_twin_has_identical_content() {
    let v1 = read_netcdf_classic(&fixture("surface_v1.nc")).unwrap();
    let v2 = read_netcdf_classic(&fixture("surface_v2.nc")).unwrap();
    assert_eq!(v1.version, FormatVersion::Classic);
    assert_eq!(v2.version, FormatVersion::Offset64);
    assert_eq!(v1.variables, v2.variables);
    assert_eq!(v1.dimensions, v2.dimensions);
}

fn golden(name: &str) -> String {
    String::from_utf8(fixture(name)).unwrap()
}

fn ascii(nc: &str, variables: Option<&[&str]>, delimiter: char) -> Result<String, ConvertError> {
    let ds = read_netcdf_classic(&fixture(nc)).unwrap();
    to_ascii(
        &ds,
        &AsciiOptions {
            variables: variables.map(|v| v.iter().map(|s| s.to_string()).collect()),
            delimiter,
        },
    )
}

#[test]
fn ascii_matches_golden_files() {
    let cases: [(&str, Option<&[&str]>, char, &str); 6] = [
        ("surface_v1.nc", None, ',', "surface_v1.txt"),
        ("surface_v2.nc", None, ',', "surface_v1.txt"),
        ("surface_v1.nc", Some(&["time", "temp"]), '\t', "surface_v1_temp_tab.txt"),
        ("grid_v1.nc", Some(&["field"]), ',', "grid_v1_field.txt"),
        ("empty_records_v1.nc", None, ',', "empty_records_v1.txt"),
        ("mag_20200101.nc", None, ',', "mag_20200101.txt"),
    ];
    for (nc, vars, delim, expected) in cases {
        assert_eq!(ascii(nc, vars, delim).unwrap(), golden(expected), "{nc} -> {expected}");
    }
    assert_eq!(ascii("mag_20200102.nc", None, ',').unwrap(), golden("mag_20200102.txt"));
}

#[test]
fn mixed_leading_dimensions_are_rejected() {
    assert!(matches!(ascii("grid_v1.nc", None, ','), Err(ConvertError::MixedDimensions(_))));
}

#[test]
fn daily_granule_yields_hourly_series() {
    let ds = read_netcdf_classic(&fixture("mag_20200101.nc")).unwrap();
    let series = extract_timeseries(&ds, "h_component").unwrap();
    assert_eq!(series.len(), 24);
    assert_eq!(series.times()[1].to_rfc3339(), "2020-01-01T01:00:00+00:00");
    assert!(series.gaps().is_empty());
    let surface = read_netcdf_classic(&fixture("surface_v1.nc")).unwrap();
    let temp = extract_timeseries(&surface, "temp").unwrap();
    assert_eq!(temp.gaps(), &[2]);
}

fn parse_guarded(bytes: &[u8]) -> Result<(), String> {
    panic::catch_unwind(|| {
        let _ = read_netcdf_classic(bytes);
    })
    .map_err(|_| format!("panic on {} bytes", bytes.len()))
}

#[test]
fn every_truncation_is_a_typed_error() {
    for name in nc_fixtures() {
        let bytes = fixture(&name);
        for len in 0..bytes.len() {
            parse_guarded(&bytes[..len]).unwrap();
            assert!(read_netcdf_classic(&bytes[..len]).is_err(), "{name} truncated to {len} parsed");
        }
    }
}

#[test]
fn ten_thousand_mutations_never_panic() {
    let corpus: Vec<Vec<u8>> = nc_fixtures().iter().map(|n| fixture(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e63);
    for _ in 0..10_000 {
        let mut bytes = corpus[rng.random_range(0..corpus.len())].clone();
        for _ in 0..rng.random_range(1..6) {
            let i = rng.random_range(0..bytes.len());
            bytes[i] = rng.random();
        }
        let cut = rng.random_range(0..=bytes.len());
        bytes.truncate(cut);
        parse_guarded(&bytes).unwrap();
    }
}
