//! Delimited plain-text rendering of a self-describing dataset.
//!
//! Layout:
//!
//! ```text
//! # <global attribute>: <value>
//! # variable <name>: <units>
//! # columns: time,temp,flux[0],flux[1]
//! 2024-04-01T00:00:00Z,271.5,1.0,2.0
//! ```
//!
//! Rows follow the leading dimension shared by the selected variables.
//! Trailing dimensions are flattened row-major into `name[i]` /
//! `name[i,j]` columns; the last dimension of a char variable is read as a
//! string. Values equal to `_FillValue` are left empty, and variables with
//! `<unit> since <epoch>` units are written as ISO 8601 timestamps.

use super::timeseries::{iso8601, time_units_of, TimeUnits};
use super::{ConvertError, SelfDescribingDataset, Values, Variable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsciiOptions {
    /// Variables to write, in order; `None` selects every record variable
    /// (or every variable when the file has no record dimension).
    pub variables: Option<Vec<String>>,
    pub delimiter: char,
}

impl Default for AsciiOptions {
    fn default() -> Self {
        Self {
            variables: None,
            delimiter: ',',
        }
    }
}

struct Column<'a> {
    var: &'a Variable,
    /// Elements per row (strings count as one element).
    per_row: usize,
    /// Characters per string for char variables.
    str_len: Option<usize>,
    time: Option<TimeUnits>,
}

pub fn to_ascii(
    dataset: &SelfDescribingDataset,
    options: &AsciiOptions,
) -> Result<String, ConvertError> {
    let selected: Vec<&Variable> = match &options.variables {
        Some(names) => names
            .iter()
            .map(|n| {
                dataset
                    .variable(n)
                    .ok_or_else(|| ConvertError::NoSuchVariable(n.clone()))
            })
            .collect::<Result<_, _>>()?,
        None => match dataset.record_dimension() {
            Some(rec) => dataset
                .variables
                .iter()
                .filter(|v| v.dimensions.first() == Some(&rec))
                .collect(),
            None => dataset.variables.iter().collect(),
        },
    };

    // shared leading dimension, or none when every selected variable is scalar
    let leading = selected.iter().map(|v| v.dimensions.first().copied());
    let mut row_dim: Option<Option<usize>> = None;
    for lead in leading {
        match row_dim {
            None => row_dim = Some(lead),
            Some(existing) if existing == lead => {}
            Some(_) => {
                let names: Vec<String> = selected
                    .iter()
                    .map(|v| format!("{}({})", v.name, dataset.dimension_names(v).join(",")))
                    .collect();
                return Err(ConvertError::MixedDimensions(names.join(" ")));
            }
        }
    }
    let rows = match row_dim.flatten() {
        Some(dim) => dataset.dimensions[dim].length,
        None if selected.is_empty() => 0,
        None => 1,
    };

    let mut columns = Vec::with_capacity(selected.len());
    let mut names = Vec::new();
    for var in &selected {
        let shape = dataset.shape(var);
        let mut inner: Vec<usize> = if row_dim.flatten().is_some() {
            shape[1..].to_vec()
        } else {
            shape.clone()
        };
        let str_len = if matches!(var.data, Values::Char(_)) {
            Some(inner.pop().unwrap_or(1))
        } else {
            None
        };
        let per_row: usize = inner.iter().product();
        push_column_names(&mut names, &var.name, &inner);
        columns.push(Column {
            var,
            per_row,
            str_len,
            time: time_units_of(var),
        });
    }

    let delim = options.delimiter;
    let mut out = String::new();
    for attr in &dataset.global_attributes {
        push_comment(&mut out, &format!("{}: {}", attr.name, attr.value.display()));
    }
    for var in &selected {
        match var.units() {
            Some(units) => push_comment(&mut out, &format!("variable {}: {units}", var.name)),
            None => push_comment(&mut out, &format!("variable {}", var.name)),
        }
    }
    if !selected.is_empty() {
        let mut line = String::from("columns: ");
        for (i, name) in names.iter().enumerate() {
            if i > 0 {
                line.push(delim);
            }
            line.push_str(&quote(name, delim));
        }
        push_comment(&mut out, &line);
    }

    let mut cell = String::new();
    for row in 0..rows {
        let mut first = true;
        for col in &columns {
            for k in 0..col.per_row {
                if !first {
                    out.push(delim);
                }
                first = false;
                cell.clear();
                let idx = row * col.per_row + k;
                render_cell(col, idx, &mut cell);
                out.push_str(&quote(&cell, delim));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn push_comment(out: &mut String, text: &str) {
    // keep every header line a single comment line
    for (i, line) in text.split('\n').enumerate() {
        out.push_str(if i == 0 { "# " } else { "#   " });
        out.push_str(line.trim_end_matches('\r'));
        out.push('\n');
    }
}

fn push_column_names(names: &mut Vec<String>, base: &str, inner: &[usize]) {
    let total: usize = inner.iter().product();
    if inner.is_empty() {
        names.push(base.to_string());
        return;
    }
    for flat in 0..total {
        let mut idx = Vec::with_capacity(inner.len());
        let mut rem = flat;
        for extent in inner.iter().rev() {
            idx.push(rem % extent);
            rem /= extent;
        }
        idx.reverse();
        let joined: Vec<String> = idx.iter().map(usize::to_string).collect();
        names.push(format!("{base}[{}]", joined.join(",")));
    }
}

fn render_cell(col: &Column<'_>, idx: usize, out: &mut String) {
    if let Some(len) = col.str_len {
        if let Values::Char(bytes) = &col.var.data {
            let start = idx * len;
            let raw = &bytes[start..start + len];
            let end = raw.iter().position(|b| *b == 0).unwrap_or(raw.len());
            out.push_str(&String::from_utf8_lossy(&raw[..end]));
        }
        return;
    }
    if col.var.is_missing(idx) {
        return;
    }
    if let Some(units) = &col.time {
        if let Some(ts) = col.var.data.get_f64(idx).and_then(|v| units.to_datetime(v)) {
            out.push_str(&iso8601(&ts));
            return;
        }
    }
    col.var.data.format_element(idx, out);
}

fn quote(field: &str, delim: char) -> String {
    if field.contains(delim) || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
