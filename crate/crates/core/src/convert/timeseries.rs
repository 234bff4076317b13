use chrono::{DateTime, Duration, SecondsFormat, Utc};

use super::{ConvertError, SelfDescribingDataset, Values, Variable};
use crate::registry::parse_timestamp;

/// `<unit> since <epoch>` time encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeUnits {
    pub unit_micros: i64,
    pub epoch: DateTime<Utc>,
}

impl TimeUnits {
    pub fn to_datetime(&self, value: f64) -> Option<DateTime<Utc>> {
        if !value.is_finite() {
            return None;
        }
        let micros = (value * self.unit_micros as f64).round();
        if micros.abs() > 9.0e18 {
            return None;
        }
        self.epoch
            .checked_add_signed(Duration::microseconds(micros as i64))
    }
}

/// Parse CF-style units such as `"hours since 2024-04-01 00:00:00"`.
pub fn parse_time_units(units: &str) -> Option<TimeUnits> {
    let lower = units.trim().to_ascii_lowercase();
    let (unit, epoch) = lower.split_once(" since ")?;
    let unit_micros = match unit.trim() {
        "seconds" | "second" | "secs" | "sec" | "s" => 1_000_000,
        "minutes" | "minute" | "mins" | "min" => 60_000_000,
        "hours" | "hour" | "hrs" | "hr" | "h" => 3_600_000_000,
        "days" | "day" | "d" => 86_400_000_000,
        _ => return None,
    };
    let epoch = epoch.trim();
    let epoch = epoch
        .strip_suffix(" utc")
        .or_else(|| epoch.strip_suffix(" +00:00"))
        .or_else(|| epoch.strip_suffix(" 0:00"))
        .unwrap_or(epoch)
        .trim()
        .replace('z', "Z")
        .replace('t', "T");
    let epoch = parse_timestamp(&epoch)?;
    Some(TimeUnits { unit_micros, epoch })
}

pub(crate) fn time_units_of(var: &Variable) -> Option<TimeUnits> {
    var.units().as_deref().and_then(parse_time_units)
}

pub(crate) fn iso8601(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Times are strictly increasing; `values[i]` is NaN for every gap index.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<DateTime<Utc>>,
    values: Vec<f64>,
    gaps: Vec<usize>,
}

impl TimeSeries {
    /// Non-finite values are treated as gaps.
    pub fn new(times: Vec<DateTime<Utc>>, values: Vec<f64>) -> Result<Self, String> {
        if times.len() != values.len() {
            return Err(format!(
                "{} timestamps but {} values",
                times.len(),
                values.len()
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err("timestamps are not strictly increasing".into());
        }
        let gaps = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_finite())
            .map(|(i, _)| i)
            .collect();
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Ok(Self {
            times,
            values,
            gaps,
        })
    }

    pub fn times(&self) -> &[DateTime<Utc>] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gaps(&self) -> &[usize] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_gap(&self, i: usize) -> bool {
        self.values[i].is_nan()
    }

    /// Concatenate series from consecutive granules. Later samples that do
    /// not advance time are dropped.
    pub fn concat(parts: impl IntoIterator<Item = TimeSeries>) -> TimeSeries {
        let mut times: Vec<DateTime<Utc>> = Vec::new();
        let mut values = Vec::new();
        let mut parts: Vec<_> = parts.into_iter().filter(|p| !p.is_empty()).collect();
        parts.sort_by_key(|p| p.times[0]);
        for part in parts {
            for (t, v) in part.times.into_iter().zip(part.values) {
                if times.last().is_none_or(|last| t > *last) {
                    times.push(t);
                    values.push(v);
                }
            }
        }
        TimeSeries::new(times, values).expect("concat keeps times increasing")
    }
}

/// Pull a 1-D variable and its time coordinate out of a dataset.
pub fn extract_timeseries(
    dataset: &SelfDescribingDataset,
    variable: &str,
) -> Result<TimeSeries, ConvertError> {
    let var = dataset
        .variable(variable)
        .ok_or_else(|| ConvertError::NoSuchVariable(variable.to_string()))?;
    if var.dimensions.len() != 1 {
        return Err(ConvertError::NonScalarVariable(variable.to_string()));
    }
    if matches!(var.data, Values::Char(_)) {
        return Err(ConvertError::NotNumeric(variable.to_string()));
    }
    let dim = var.dimensions[0];
    let dim_name = &dataset.dimensions[dim].name;
    let is_time = |v: &&Variable| v.dimensions == [dim] && time_units_of(v).is_some();
    let time_var = dataset
        .variables
        .iter()
        .filter(is_time)
        .find(|v| &v.name == dim_name)
        .or_else(|| dataset.variables.iter().filter(is_time).find(|v| v.name != variable))
        .ok_or_else(|| ConvertError::NoTimeCoordinate(variable.to_string()))?;
    let units = time_units_of(time_var).expect("filtered on units");

    let mut times = Vec::with_capacity(var.data.len());
    let mut values = Vec::with_capacity(var.data.len());
    for i in 0..var.data.len() {
        if time_var.is_missing(i) {
            continue;
        }
        let Some(t) = time_var.data.get_f64(i).and_then(|x| units.to_datetime(x)) else {
            continue;
        };
        let v = if var.is_missing(i) {
            f64::NAN
        } else {
            var.data.get_f64(i).unwrap_or(f64::NAN)
        };
        times.push(t);
        values.push(v);
    }
    TimeSeries::new(times, values)
        .map_err(|_| ConvertError::NonMonotonicTime(time_var.name.clone()))
}
