//! Self-describing binary data: decoding, plain-text conversion and time
//! series extraction.
//!
//! Decoders plug in through [`FormatAdapter`], selected by magic bytes. Only
//! NetCDF classic ships with the crate.

mod ascii;
pub mod netcdf;
mod timeseries;

use std::fmt::Write;

pub use ascii::{to_ascii, AsciiOptions};
pub use netcdf::{read_netcdf_classic, NcType};
pub use timeseries::{extract_timeseries, parse_time_units, TimeSeries, TimeUnits};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConvertError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("file truncated: needed {needed} bytes, only {available} present")]
    TruncatedFile { needed: usize, available: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("selected variables do not share a leading dimension: {0}")]
    MixedDimensions(String),
    #[error("no variable named {0:?}")]
    NoSuchVariable(String),
    #[error("no time coordinate for variable {0:?}")]
    NoTimeCoordinate(String),
    #[error("variable {0:?} is not one-dimensional")]
    NonScalarVariable(String),
    #[error("variable {0:?} is not numeric")]
    NotNumeric(String),
    #[error("time coordinate {0:?} is not strictly increasing")]
    NonMonotonicTime(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatVersion {
    /// CDF-1, 32-bit offsets.
    Classic,
    /// CDF-2, 64-bit offsets.
    Offset64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Byte(Vec<i8>),
    Char(Vec<u8>),
    Short(Vec<i16>),
    Int(Vec<i32>),
    Float(Vec<f32>),
    Double(Vec<f64>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Byte(v) => v.len(),
            Values::Char(v) => v.len(),
            Values::Short(v) => v.len(),
            Values::Int(v) => v.len(),
            Values::Float(v) => v.len(),
            Values::Double(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nc_type(&self) -> NcType {
        match self {
            Values::Byte(_) => NcType::Byte,
            Values::Char(_) => NcType::Char,
            Values::Short(_) => NcType::Short,
            Values::Int(_) => NcType::Int,
            Values::Float(_) => NcType::Float,
            Values::Double(_) => NcType::Double,
        }
    }

    /// Numeric element as f64; `None` for text or out-of-range index.
    pub fn get_f64(&self, i: usize) -> Option<f64> {
        match self {
            Values::Byte(v) => v.get(i).map(|x| f64::from(*x)),
            Values::Char(_) => None,
            Values::Short(v) => v.get(i).map(|x| f64::from(*x)),
            Values::Int(v) => v.get(i).map(|x| f64::from(*x)),
            Values::Float(v) => v.get(i).map(|x| f64::from(*x)),
            Values::Double(v) => v.get(i).copied(),
        }
    }

    /// Character data up to the first NUL.
    pub fn as_text(&self) -> Option<String> {
        match self {
            Values::Char(bytes) => {
                let end = bytes.iter().position(|b| *b == 0).unwrap_or(bytes.len());
                Some(String::from_utf8_lossy(&bytes[..end]).into_owned())
            }
            _ => None,
        }
    }

    /// Element `i` equals the first element of `fill` (NaN matches NaN).
    pub fn is_fill(&self, i: usize, fill: &Values) -> bool {
        match (self, fill) {
            (Values::Byte(v), Values::Byte(f)) => f.first().is_some_and(|f| v.get(i) == Some(f)),
            (Values::Short(v), Values::Short(f)) => f.first().is_some_and(|f| v.get(i) == Some(f)),
            (Values::Int(v), Values::Int(f)) => f.first().is_some_and(|f| v.get(i) == Some(f)),
            (Values::Float(v), Values::Float(f)) => f.first().is_some_and(|f| {
                v.get(i)
                    .is_some_and(|x| x == f || (x.is_nan() && f.is_nan()))
            }),
            (Values::Double(v), Values::Double(f)) => f.first().is_some_and(|f| {
                v.get(i)
                    .is_some_and(|x| x == f || (x.is_nan() && f.is_nan()))
            }),
            _ => match (self.get_f64(i), fill.get_f64(0)) {
                (Some(x), Some(f)) => x == f,
                _ => false,
            },
        }
    }

    /// Shortest text that parses back to the same value.
    pub fn format_element(&self, i: usize, out: &mut String) {
        let _ = match self {
            Values::Byte(v) => write!(out, "{}", v[i]),
            Values::Char(v) => write!(out, "{}", v[i] as char),
            Values::Short(v) => write!(out, "{}", v[i]),
            Values::Int(v) => write!(out, "{}", v[i]),
            Values::Float(v) => write!(out, "{:?}", v[i]),
            Values::Double(v) => write!(out, "{:?}", v[i]),
        };
    }

    /// Attribute rendering: text as-is, numbers space separated.
    pub fn display(&self) -> String {
        if let Some(text) = self.as_text() {
            return text;
        }
        let mut out = String::new();
        for i in 0..self.len() {
            if i > 0 {
                out.push(' ');
            }
            self.format_element(i, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    /// For the record dimension this is the current record count.
    pub length: usize,
    pub is_record: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub value: Values,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    /// Indices into [`SelfDescribingDataset::dimensions`].
    pub dimensions: Vec<usize>,
    pub attributes: Vec<Attribute>,
    pub data: Values,
}

impl Variable {
    pub fn attribute(&self, name: &str) -> Option<&Values> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| &a.value)
    }

    pub fn units(&self) -> Option<String> {
        self.attribute("units").and_then(Values::as_text)
    }

    pub fn fill_value(&self) -> Option<&Values> {
        self.attribute("_FillValue")
    }

    /// Element is missing: equal to `_FillValue`.
    pub fn is_missing(&self, i: usize) -> bool {
        self.fill_value().is_some_and(|f| self.data.is_fill(i, f))
    }
}

/// Parsed in-memory form of a self-describing file.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfDescribingDataset {
    pub version: FormatVersion,
    pub dimensions: Vec<Dimension>,
    pub variables: Vec<Variable>,
    pub global_attributes: Vec<Attribute>,
}

impl SelfDescribingDataset {
    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn global_attribute(&self, name: &str) -> Option<&Values> {
        self.global_attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| &a.value)
    }

    pub fn record_dimension(&self) -> Option<usize> {
        self.dimensions.iter().position(|d| d.is_record)
    }

    pub fn dimension_names(&self, var: &Variable) -> Vec<&str> {
        var.dimensions
            .iter()
            .map(|d| self.dimensions[*d].name.as_str())
            .collect()
    }

    pub fn shape(&self, var: &Variable) -> Vec<usize> {
        var.dimensions
            .iter()
            .map(|d| self.dimensions[*d].length)
            .collect()
    }
}

/// Decoder for one binary format, chosen by sniffing the leading bytes.
pub trait FormatAdapter: Send + Sync {
    fn name(&self) -> &'static str;
    fn sniff(&self, bytes: &[u8]) -> bool;
    fn read(&self, bytes: &[u8]) -> Result<SelfDescribingDataset, ConvertError>;
}

pub struct NetcdfClassicAdapter;

impl FormatAdapter for NetcdfClassicAdapter {
    fn name(&self) -> &'static str {
        "netcdf-classic"
    }

    fn sniff(&self, bytes: &[u8]) -> bool {
        bytes.starts_with(b"CDF")
    }

    fn read(&self, bytes: &[u8]) -> Result<SelfDescribingDataset, ConvertError> {
        read_netcdf_classic(bytes)
    }
}

pub struct AdapterRegistry {
    adapters: Vec<Box<dyn FormatAdapter>>,
}

impl Default for AdapterRegistry {
    fn default() -> Self {
        Self {
            adapters: vec![Box::new(NetcdfClassicAdapter)],
        }
    }
}

impl AdapterRegistry {
    pub fn register(&mut self, adapter: Box<dyn FormatAdapter>) {
        self.adapters.push(adapter);
    }

    pub fn read(&self, bytes: &[u8]) -> Result<SelfDescribingDataset, ConvertError> {
        match self.adapters.iter().find(|a| a.sniff(bytes)) {
            Some(adapter) => adapter.read(bytes),
            // let the NetCDF reader produce its diagnostic (truncation vs. foreign magic)
            None => read_netcdf_classic(bytes),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    //! Tiny NetCDF classic writer used to build unit-test inputs.

    use super::*;

    pub struct Var<'a> {
        pub name: &'a str,
        pub dims: Vec<usize>,
        pub attrs: Vec<(&'a str, Values)>,
        pub data: Values,
    }

    fn put_name(out: &mut Vec<u8>, name: &str) {
        out.extend((name.len() as u32).to_be_bytes());
        out.extend(name.as_bytes());
        out.extend(std::iter::repeat_n(0u8, (4 - name.len() % 4) % 4));
    }

    fn type_code(v: &Values) -> u32 {
        match v {
            Values::Byte(_) => 1,
            Values::Char(_) => 2,
            Values::Short(_) => 3,
            Values::Int(_) => 4,
            Values::Float(_) => 5,
            Values::Double(_) => 6,
        }
    }

    fn encode(v: &Values) -> Vec<u8> {
        match v {
            Values::Byte(x) => x.iter().map(|b| *b as u8).collect(),
            Values::Char(x) => x.clone(),
            Values::Short(x) => x.iter().flat_map(|n| n.to_be_bytes()).collect(),
            Values::Int(x) => x.iter().flat_map(|n| n.to_be_bytes()).collect(),
            Values::Float(x) => x.iter().flat_map(|n| n.to_be_bytes()).collect(),
            Values::Double(x) => x.iter().flat_map(|n| n.to_be_bytes()).collect(),
        }
    }

    fn put_attrs(out: &mut Vec<u8>, attrs: &[(&str, Values)]) {
        if attrs.is_empty() {
            out.extend([0u8; 8]);
            return;
        }
        out.extend(0x0Cu32.to_be_bytes());
        out.extend((attrs.len() as u32).to_be_bytes());
        for (name, value) in attrs {
            put_name(out, name);
            out.extend(type_code(value).to_be_bytes());
            out.extend((value.len() as u32).to_be_bytes());
            let bytes = encode(value);
            let pad = (4 - bytes.len() % 4) % 4;
            out.extend(bytes);
            out.extend(std::iter::repeat_n(0u8, pad));
        }
    }

    /// Write a CDF-1 file. `dims` is `(name, length)`, length 0 marks the
    /// record dimension; `numrecs` is the record count.
    pub fn write_classic(
        dims: &[(&str, usize)],
        numrecs: usize,
        gatts: &[(&str, Values)],
        vars: &[Var<'_>],
    ) -> Vec<u8> {
        let record_dim = dims.iter().position(|d| d.1 == 0);
        let is_rec = |v: &Var<'_>| v.dims.first().copied() == record_dim && record_dim.is_some();
        let elem = |v: &Var<'_>| v.data.nc_type().size();
        let slice = |v: &Var<'_>| {
            let inner = if is_rec(v) { &v.dims[1..] } else { &v.dims[..] };
            inner.iter().map(|d| dims[*d].1).product::<usize>() * elem(v)
        };
        let nrec_vars = vars.iter().filter(|v| is_rec(v)).count();
        let vsize = |v: &Var<'_>| {
            let s = slice(v);
            if is_rec(v) && nrec_vars == 1 {
                s
            } else {
                s.div_ceil(4) * 4
            }
        };

        let mut head = Vec::new();
        head.extend(b"CDF\x01");
        head.extend((numrecs as u32).to_be_bytes());
        if dims.is_empty() {
            head.extend([0u8; 8]);
        } else {
            head.extend(0x0Au32.to_be_bytes());
            head.extend((dims.len() as u32).to_be_bytes());
            for (name, len) in dims {
                put_name(&mut head, name);
                head.extend((*len as u32).to_be_bytes());
            }
        }
        put_attrs(&mut head, gatts);
        let mut begin_slots = Vec::new();
        if vars.is_empty() {
            head.extend([0u8; 8]);
        } else {
            head.extend(0x0Bu32.to_be_bytes());
            head.extend((vars.len() as u32).to_be_bytes());
            for v in vars {
                put_name(&mut head, v.name);
                head.extend((v.dims.len() as u32).to_be_bytes());
                for d in &v.dims {
                    head.extend((*d as u32).to_be_bytes());
                }
                put_attrs(&mut head, &v.attrs);
                head.extend(type_code(&v.data).to_be_bytes());
                head.extend((vsize(v) as u32).to_be_bytes());
                begin_slots.push(head.len());
                head.extend(0u32.to_be_bytes());
            }
        }

        let mut out = head;
        let mut begins = vec![0usize; vars.len()];
        for (i, v) in vars.iter().enumerate().filter(|(_, v)| !is_rec(v)) {
            begins[i] = out.len();
            let bytes = encode(&v.data);
            out.extend(&bytes);
            out.extend(std::iter::repeat_n(0u8, vsize(v) - bytes.len()));
        }
        let recsize: usize = vars.iter().filter(|v| is_rec(v)).map(|v| vsize(v)).sum();
        let rec_start = out.len();
        let mut offset = 0;
        for (i, v) in vars.iter().enumerate().filter(|(_, v)| is_rec(v)) {
            begins[i] = rec_start + offset;
            offset += vsize(v);
        }
        out.resize(rec_start + recsize * numrecs, 0);
        for (i, v) in vars.iter().enumerate().filter(|(_, v)| is_rec(v)) {
            let bytes = encode(&v.data);
            let s = slice(v);
            for r in 0..numrecs {
                let at = begins[i] + r * recsize;
                out[at..at + s].copy_from_slice(&bytes[r * s..(r + 1) * s]);
            }
        }
        for (slot, begin) in begin_slots.iter().zip(&begins) {
            out[*slot..*slot + 4].copy_from_slice(&(*begin as u32).to_be_bytes());
        }
        out
    }

    pub fn text(s: &str) -> Values {
        Values::Char(s.as_bytes().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn two_var_file() -> Vec<u8> {
        write_classic(
            &[("time", 0), ("pair", 2)],
            3,
            &[("title", text("test"))],
            &[
                Var {
                    name: "time",
                    dims: vec![0],
                    attrs: vec![("units", text("seconds since 2024-04-01 00:00:00"))],
                    data: Values::Double(vec![0.0, 60.0, 120.0]),
                },
                Var {
                    name: "flag",
                    dims: vec![0],
                    attrs: vec![],
                    data: Values::Byte(vec![1, -2, 3]),
                },
                Var {
                    name: "b",
                    dims: vec![0, 1],
                    attrs: vec![("_FillValue", Values::Short(vec![-999]))],
                    data: Values::Short(vec![1, 2, 3, -999, 5, 6]),
                },
            ],
        )
    }

    #[test]
    fn reads_interleaved_record_variables() {
        let ds = read_netcdf_classic(&two_var_file()).unwrap();
        assert_eq!(ds.version, FormatVersion::Classic);
        assert_eq!(ds.dimensions[0].length, 3);
        assert!(ds.dimensions[0].is_record);
        assert_eq!(ds.global_attribute("title").unwrap().as_text().unwrap(), "test");
        assert_eq!(
            ds.variable("time").unwrap().data,
            Values::Double(vec![0.0, 60.0, 120.0])
        );
        assert_eq!(ds.variable("flag").unwrap().data, Values::Byte(vec![1, -2, 3]));
        let b = ds.variable("b").unwrap();
        assert_eq!(b.data, Values::Short(vec![1, 2, 3, -999, 5, 6]));
        assert!(b.is_missing(3));
        assert!(!b.is_missing(2));
    }

    #[test]
    fn single_record_variable_is_unpadded() {
        let bytes = write_classic(
            &[("t", 0)],
            5,
            &[],
            &[Var {
                name: "v",
                dims: vec![0],
                attrs: vec![],
                data: Values::Short(vec![1, 2, 3, 4, 5]),
            }],
        );
        let ds = read_netcdf_classic(&bytes).unwrap();
        assert_eq!(ds.variables[0].data, Values::Short(vec![1, 2, 3, 4, 5]));
    }

    #[test]
    fn foreign_magic_is_unsupported() {
        assert!(matches!(
            read_netcdf_classic(b"\x89HDF\r\n\x1a\n"),
            Err(ConvertError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            read_netcdf_classic(&[0xCD, 0xF3, 0x00, 0x01, 0, 0, 0, 0]),
            Err(ConvertError::UnsupportedFormat(m)) if m.contains("CDF")
        ));
        assert!(matches!(
            read_netcdf_classic(b"XY"),
            Err(ConvertError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            read_netcdf_classic(b"CDF\x05"),
            Err(ConvertError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn every_truncation_is_a_typed_error() {
        let bytes = two_var_file();
        for cut in 0..bytes.len() {
            match read_netcdf_classic(&bytes[..cut]) {
                Err(ConvertError::TruncatedFile { .. }) | Err(ConvertError::MalformedHeader(_)) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn header_corruptions() {
        let mut bytes = two_var_file();
        // dimension list tag
        bytes[8] = 0x7F;
        assert!(matches!(
            read_netcdf_classic(&bytes),
            Err(ConvertError::MalformedHeader(_))
        ));
        let two_records = write_classic(&[("a", 0), ("b", 0)], 0, &[], &[]);
        assert!(matches!(
            read_netcdf_classic(&two_records),
            Err(ConvertError::MalformedHeader(m)) if m.contains("record")
        ));
    }

    #[test]
    fn adapter_registry_dispatches_on_magic() {
        let registry = AdapterRegistry::default();
        assert!(registry.read(&two_var_file()).is_ok());
        assert!(matches!(
            registry.read(b"GRIB...."),
            Err(ConvertError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn value_formatting_is_shortest_roundtrip() {
        let v = Values::Float(vec![0.1, 1.0, 1e-7, f32::MAX]);
        let mut s = String::new();
        for i in 0..v.len() {
            s.clear();
            v.format_element(i, &mut s);
            let back: f32 = s.parse().unwrap();
            assert_eq!(back, v.get_f64(i).unwrap() as f32);
        }
        assert_eq!(Values::Double(vec![0.5, 2.0]).display(), "0.5 2.0");
    }
}
