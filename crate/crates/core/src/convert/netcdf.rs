//! Reader for the NetCDF classic (CDF-1) and 64-bit offset (CDF-2) formats.
//!
//! All numbers are big-endian. The header lists dimensions, global
//! attributes and variables; each variable records the file offset of its
//! data. Record variables are interleaved: record `r` of a variable lives
//! at `begin + r * recsize`, where `recsize` is the sum of the padded
//! per-record sizes of all record variables (unpadded when there is only
//! one record variable).

use super::{ConvertError, Dimension, SelfDescribingDataset, Values, Variable, Attribute, FormatVersion};

const NC_DIMENSION: u32 = 0x0A;
const NC_VARIABLE: u32 = 0x0B;
const NC_ATTRIBUTE: u32 = 0x0C;
const STREAMING: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcType {
    Byte,
    Char,
    Short,
    Int,
    Float,
    Double,
}

impl NcType {
    fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            1 => NcType::Byte,
            2 => NcType::Char,
            3 => NcType::Short,
            4 => NcType::Int,
            5 => NcType::Float,
            6 => NcType::Double,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            NcType::Byte | NcType::Char => 1,
            NcType::Short => 2,
            NcType::Int | NcType::Float => 4,
            NcType::Double => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NcType::Byte => "byte",
            NcType::Char => "char",
            NcType::Short => "short",
            NcType::Int => "int",
            NcType::Float => "float",
            NcType::Double => "double",
        }
    }
}

fn pad4(n: usize) -> usize {
    n.div_ceil(4) * 4
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ConvertError> {
        if n > self.remaining() {
            return Err(ConvertError::TruncatedFile {
                needed: self.pos.saturating_add(n),
                available: self.buf.len(),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ConvertError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, ConvertError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_be_bytes(a))
    }

    fn non_neg(&mut self, what: &str) -> Result<usize, ConvertError> {
        let v = self.u32()?;
        if v > i32::MAX as u32 {
            return Err(malformed(format!("{what} {v} is negative")));
        }
        Ok(v as usize)
    }

    fn name(&mut self) -> Result<String, ConvertError> {
        let len = self.non_neg("name length")?;
        let bytes = self.take(len)?;
        let name = std::str::from_utf8(bytes)
            .map_err(|_| malformed("name is not UTF-8".into()))?
            .to_string();
        self.take(pad4(len) - len)?;
        if name.is_empty() {
            return Err(malformed("empty name".into()));
        }
        Ok(name)
    }

    /// `ABSENT` (two zero words) or `tag nelems`.
    fn list_header(&mut self, tag: u32, what: &str) -> Result<usize, ConvertError> {
        let found = self.u32()?;
        let count = self.non_neg(what)?;
        match found {
            0 if count == 0 => Ok(0),
            t if t == tag => Ok(count),
            other => Err(malformed(format!("expected {what} tag {tag:#x}, found {other:#x}"))),
        }
    }

    fn values(&mut self, ty: NcType, count: usize) -> Result<Values, ConvertError> {
        let nbytes = count
            .checked_mul(ty.size())
            .ok_or_else(|| malformed("attribute too large".into()))?;
        let bytes = self.take(nbytes)?;
        let values = decode(ty, bytes);
        self.take(pad4(nbytes) - nbytes)?;
        Ok(values)
    }
}

fn malformed(message: String) -> ConvertError {
    ConvertError::MalformedHeader(message)
}

fn decode(ty: NcType, bytes: &[u8]) -> Values {
    match ty {
        NcType::Byte => Values::Byte(bytes.iter().map(|b| *b as i8).collect()),
        NcType::Char => Values::Char(bytes.to_vec()),
        NcType::Short => Values::Short(
            bytes
                .chunks_exact(2)
                .map(|c| i16::from_be_bytes([c[0], c[1]]))
                .collect(),
        ),
        NcType::Int => Values::Int(
            bytes
                .chunks_exact(4)
                .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        NcType::Float => Values::Float(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        NcType::Double => Values::Double(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        ),
    }
}

fn read_attributes(cur: &mut Cursor<'_>) -> Result<Vec<Attribute>, ConvertError> {
    let count = cur.list_header(NC_ATTRIBUTE, "attribute list")?;
    // every attribute needs at least 12 bytes, bound the allocation by what is left
    let mut attrs: Vec<Attribute> = Vec::with_capacity(count.min(cur.remaining() / 12));
    for _ in 0..count {
        let name = cur.name()?;
        let ty = NcType::from_code(cur.u32()?)
            .ok_or_else(|| malformed(format!("attribute {name} has an unknown type")))?;
        let n = cur.non_neg("attribute length")?;
        let value = cur.values(ty, n)?;
        if attrs.iter().any(|a| a.name == name) {
            return Err(malformed(format!("duplicate attribute {name}")));
        }
        attrs.push(Attribute { name, value });
    }
    Ok(attrs)
}

struct VarHeader {
    name: String,
    dim_ids: Vec<usize>,
    attributes: Vec<Attribute>,
    ty: NcType,
    begin: u64,
}

/// Decode a complete NetCDF classic or 64-bit offset file.
pub fn read_netcdf_classic(bytes: &[u8]) -> Result<SelfDescribingDataset, ConvertError> {
    if bytes.len() < 4 && b"CDF".starts_with(&bytes[..bytes.len().min(3)]) {
        return Err(ConvertError::TruncatedFile {
            needed: 4,
            available: bytes.len(),
        });
    }
    if bytes.len() < 4 || &bytes[..3] != b"CDF" {
        return Err(ConvertError::UnsupportedFormat(describe_magic(bytes)));
    }
    let version = match bytes[3] {
        1 => FormatVersion::Classic,
        2 => FormatVersion::Offset64,
        5 => {
            return Err(ConvertError::UnsupportedFormat(
                "CDF-5 (64-bit data) is not supported".into(),
            ))
        }
        v => return Err(ConvertError::UnsupportedFormat(format!("unknown CDF version {v}"))),
    };
    let mut cur = Cursor { buf: bytes, pos: 4 };
    let numrecs_raw = cur.u32()?;

    let ndims = cur.list_header(NC_DIMENSION, "dimension list")?;
    let mut dimensions: Vec<Dimension> = Vec::with_capacity(ndims.min(cur.remaining() / 8));
    let mut record_dim = None;
    for idx in 0..ndims {
        let name = cur.name()?;
        let length = cur.non_neg("dimension length")?;
        let is_record = length == 0;
        if is_record {
            if record_dim.is_some() {
                return Err(malformed("more than one record dimension".into()));
            }
            record_dim = Some(idx);
        }
        if dimensions.iter().any(|d| d.name == name) {
            return Err(malformed(format!("duplicate dimension {name}")));
        }
        dimensions.push(Dimension {
            name,
            length,
            is_record,
        });
    }

    let global_attributes = read_attributes(&mut cur)?;

    let nvars = cur.list_header(NC_VARIABLE, "variable list")?;
    let mut headers: Vec<VarHeader> = Vec::with_capacity(nvars.min(cur.remaining() / 24));
    for _ in 0..nvars {
        let name = cur.name()?;
        let rank = cur.non_neg("variable rank")?;
        let mut dim_ids = Vec::with_capacity(rank.min(cur.remaining() / 4));
        for pos in 0..rank {
            let id = cur.non_neg("dimension id")?;
            if id >= dimensions.len() {
                return Err(malformed(format!("variable {name} refers to dimension {id}")));
            }
            if Some(id) == record_dim && pos != 0 {
                return Err(malformed(format!(
                    "variable {name} uses the record dimension in position {pos}"
                )));
            }
            dim_ids.push(id);
        }
        let attributes = read_attributes(&mut cur)?;
        let ty = NcType::from_code(cur.u32()?)
            .ok_or_else(|| malformed(format!("variable {name} has an unknown type")))?;
        let _vsize = cur.u32()?;
        let begin = match version {
            FormatVersion::Classic => u64::from(cur.u32()?),
            FormatVersion::Offset64 => cur.u64()?,
        };
        if headers.iter().any(|h| h.name == name) {
            return Err(malformed(format!("duplicate variable {name}")));
        }
        headers.push(VarHeader {
            name,
            dim_ids,
            attributes,
            ty,
            begin,
        });
    }
    let header_end = cur.pos as u64;

    // Per-record slice size of each variable (whole size for fixed variables).
    let is_rec = |h: &VarHeader| h.dim_ids.first().is_some_and(|d| Some(*d) == record_dim);
    let mut slice_bytes = Vec::with_capacity(headers.len());
    for h in &headers {
        let inner = if is_rec(h) { &h.dim_ids[1..] } else { &h.dim_ids[..] };
        let count = inner
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(dimensions[*d].length))
            .and_then(|n| n.checked_mul(h.ty.size()))
            .ok_or_else(|| malformed(format!("variable {} is too large", h.name)))?;
        slice_bytes.push(count);
    }
    let record_vars = headers.iter().filter(|h| is_rec(h)).count();
    let recsize: usize = if record_vars == 1 {
        headers
            .iter()
            .zip(&slice_bytes)
            .find(|(h, _)| is_rec(h))
            .map(|(_, s)| *s)
            .unwrap_or(0)
    } else {
        headers
            .iter()
            .zip(&slice_bytes)
            .filter(|(h, _)| is_rec(h))
            .try_fold(0usize, |acc, (_, s)| acc.checked_add(pad4(*s)))
            .ok_or_else(|| malformed("record size overflows".into()))?
    };

    let numrecs = if numrecs_raw == STREAMING {
        let first_rec = headers
            .iter()
            .filter(|h| is_rec(h))
            .map(|h| h.begin)
            .min();
        match first_rec {
            Some(begin) if recsize > 0 => {
                (bytes.len() as u64).saturating_sub(begin) as usize / recsize
            }
            _ => 0,
        }
    } else if numrecs_raw > i32::MAX as u32 {
        return Err(malformed(format!("record count {numrecs_raw} is negative")));
    } else {
        numrecs_raw as usize
    };
    if let Some(idx) = record_dim {
        dimensions[idx].length = numrecs;
    }

    let mut variables = Vec::with_capacity(headers.len());
    for (h, slice) in headers.into_iter().zip(slice_bytes) {
        if h.begin < header_end {
            return Err(malformed(format!(
                "variable {} begins inside the header (offset {})",
                h.name, h.begin
            )));
        }
        let begin = usize::try_from(h.begin)
            .map_err(|_| malformed(format!("variable {} offset overflows", h.name)))?;
        let data = if is_rec(&h) {
            let stride_pad = if record_vars == 1 { slice } else { pad4(slice) };
            if numrecs > 0 {
                let end = (numrecs - 1)
                    .checked_mul(recsize)
                    .and_then(|n| n.checked_add(begin))
                    .and_then(|n| n.checked_add(stride_pad))
                    .ok_or_else(|| malformed(format!("variable {} extent overflows", h.name)))?;
                require(bytes, end)?;
            }
            let mut raw = Vec::with_capacity(slice * numrecs);
            for r in (0..numrecs).take_while(|_| slice > 0) {
                let start = begin + r * recsize;
                raw.extend_from_slice(&bytes[start..start + slice]);
            }
            decode(h.ty, &raw)
        } else {
            let end = begin
                .checked_add(pad4(slice))
                .ok_or_else(|| malformed(format!("variable {} extent overflows", h.name)))?;
            require(bytes, end)?;
            decode(h.ty, &bytes[begin..begin + slice])
        };
        variables.push(Variable {
            name: h.name,
            dimensions: h.dim_ids,
            attributes: h.attributes,
            data,
        });
    }

    Ok(SelfDescribingDataset {
        version,
        dimensions,
        variables,
        global_attributes,
    })
}

fn require(bytes: &[u8], end: usize) -> Result<(), ConvertError> {
    if end > bytes.len() {
        Err(ConvertError::TruncatedFile {
            needed: end,
            available: bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn describe_magic(bytes: &[u8]) -> String {
    // NASA CDF files start with 0xCDF30001 / 0xCDF26002 / 0x0000FFFF.
    match bytes.get(..4) {
        Some([0xCD, 0xF3, 0x00, 0x01]) | Some([0xCD, 0xF2, 0x60, 0x02]) | Some([0x00, 0x00, 0xFF, 0xFF]) => {
            "NASA CDF files are not supported by the NetCDF reader".into()
        }
        Some([0x89, b'H', b'D', b'F']) => "NetCDF-4/HDF5 files are not supported".into(),
        Some(m) => format!("unrecognised magic bytes {m:02x?}"),
        None => format!("file too short to identify ({} bytes)", bytes.len()),
    }
}
