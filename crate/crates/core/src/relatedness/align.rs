//! Resampling two time series onto a shared epoch-aligned grid.

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::RelatednessError;
use crate::convert::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of the valid samples falling in each cell.
    #[default]
    Mean,
    /// Sample closest to the cell start, within the tolerance.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentSpec {
    pub cadence: TimeDelta,
    pub aggregation: Aggregation,
    pub min_overlap_points: usize,
    /// Defaults to half the effective cadence.
    pub nearest_tolerance: Option<TimeDelta>,
}

impl Default for AlignmentSpec {
    fn default() -> Self {
        Self {
            cadence: TimeDelta::minutes(1),
            aggregation: Aggregation::Mean,
            min_overlap_points: 16,
            nearest_tolerance: None,
        }
    }
}

impl AlignmentSpec {
    pub fn check(&self) -> Result<(), RelatednessError> {
        if self.cadence <= TimeDelta::zero() {
            return Err(RelatednessError::InvalidParameter(
                "cadence must be positive".into(),
            ));
        }
        if self.min_overlap_points < 3 {
            return Err(RelatednessError::InvalidParameter(
                "min_overlap_points must be at least 3".into(),
            ));
        }
        if self.nearest_tolerance.is_some_and(|t| t < TimeDelta::zero()) {
            return Err(RelatednessError::InvalidParameter(
                "nearest tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Bound on grid cells per alignment.
pub const MAX_CELLS: usize = 10_000_000;

fn micros(t: &DateTime<Utc>) -> i64 {
    t.timestamp_micros()
}

/// Median positive spacing between samples, in microseconds (0 for fewer
/// than two samples).
pub fn native_cadence(series: &TimeSeries) -> i64 {
    let mut steps: Vec<i64> = series
        .times()
        .windows(2)
        .map(|w| micros(&w[1]) - micros(&w[0]))
        .collect();
    if steps.is_empty() {
        return 0;
    }
    steps.sort_unstable();
    let mid = steps.len() / 2;
    if steps.len() % 2 == 1 {
        steps[mid]
    } else {
        steps[mid - 1] + (steps[mid] - steps[mid - 1]) / 2
    }
}

/// Paired values on cells `[k·c, (k+1)·c)` since the Unix epoch, where `c`
/// is the coarsest of the requested and the two native cadences and `k`
/// runs over the cells touching the intersected time range. Cells where
/// either side has no valid value are dropped.
pub fn align_series(
    a: &TimeSeries,
    b: &TimeSeries,
    spec: &AlignmentSpec,
) -> Result<(Vec<f64>, Vec<f64>), RelatednessError> {
    spec.check()?;
    if a.is_empty() || b.is_empty() {
        return Err(RelatednessError::NoOverlap { pairs: 0 });
    }
    let requested = spec
        .cadence
        .num_microseconds()
        .ok_or_else(|| RelatednessError::InvalidParameter("cadence too large".into()))?;
    let cell = requested.max(native_cadence(a)).max(native_cadence(b));
    let start = micros(&a.times()[0]).max(micros(&b.times()[0]));
    let end = micros(a.times().last().unwrap()).min(micros(b.times().last().unwrap()));
    if start > end {
        return Err(RelatednessError::NoOverlap { pairs: 0 });
    }
    let k0 = start.div_euclid(cell);
    let k1 = end.div_euclid(cell);
    let cells = usize::try_from(k1 - k0 + 1).unwrap_or(usize::MAX);
    if cells > MAX_CELLS {
        return Err(RelatednessError::InvalidParameter(format!(
            "alignment grid of {cells} cells exceeds {MAX_CELLS}"
        )));
    }

    let (xa, xb) = match spec.aggregation {
        Aggregation::Mean => (bin_means(a, cell, k0, cells), bin_means(b, cell, k0, cells)),
        Aggregation::Nearest => {
            let tol = match spec.nearest_tolerance {
                Some(t) => t.num_microseconds().unwrap_or(i64::MAX),
                None => cell / 2,
            };
            (
                nearest(a, cell, k0, cells, tol),
                nearest(b, cell, k0, cells, tol),
            )
        }
    };
    let (x, y): (Vec<f64>, Vec<f64>) = xa
        .into_iter()
        .zip(xb)
        .filter_map(|(p, q)| Some((p?, q?)))
        .unzip();
    if x.len() < spec.min_overlap_points {
        return Err(RelatednessError::NoOverlap { pairs: x.len() });
    }
    Ok((x, y))
}

fn bin_means(series: &TimeSeries, cell: i64, k0: i64, cells: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; cells];
    let mut count = vec![0u32; cells];
    for (t, v) in series.times().iter().zip(series.values()) {
        if v.is_nan() {
            continue;
        }
        let k = micros(t).div_euclid(cell) - k0;
        if k < 0 || k as usize >= cells {
            continue;
        }
        sum[k as usize] += v;
        count[k as usize] += 1;
    }
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

fn nearest(series: &TimeSeries, cell: i64, k0: i64, cells: usize, tol: i64) -> Vec<Option<f64>> {
    let times: Vec<i64> = series.times().iter().map(micros).collect();
    (0..cells)
        .map(|offset| {
            let target = (k0 + offset as i64) * cell;
            let idx = times.partition_point(|t| *t < target);
            // earlier sample wins ties
            let candidates = [idx.checked_sub(1), Some(idx)];
            let best = candidates
                .into_iter()
                .flatten()
                .filter(|i| *i < times.len())
                .min_by_key(|i| ((times[*i] - target).abs(), *i))?;
            if (times[best] - target).abs() > tol {
                return None;
            }
            let v = series.values()[best];
            (!v.is_nan()).then_some(v)
        })
        .collect()
}
