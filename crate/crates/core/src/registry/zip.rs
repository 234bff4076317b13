//! Minimal store-only zip writer that can emit an archive member by member.
//!
//! Each member is written with its CRC and sizes in the local header, so the
//! caller needs the member bytes up front but never more than one member at
//! a time. Archives are limited to the classic (non-zip64) format.

use std::collections::HashSet;

use chrono::{DateTime, Datelike, Timelike, Utc};

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const END_OF_CENTRAL_SIG: u32 = 0x0605_4b50;
const VERSION: u16 = 20;
const FLAG_UTF8: u16 = 1 << 11;
const METHOD_STORED: u16 = 0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ZipError {
    #[error("no files selected")]
    EmptySelection,
    #[error("archive exceeds the 4 GiB / 65535 member limit of the classic zip format")]
    ArchiveTooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZipEntry {
    pub name: String,
    pub timestamp: DateTime<Utc>,
    pub content: Vec<u8>,
}

struct CentralRecord {
    name: String,
    crc: u32,
    size: u32,
    time: u16,
    date: u16,
    offset: u32,
}

#[derive(Default)]
pub struct ZipStreamWriter {
    offset: u64,
    central: Vec<CentralRecord>,
    names: HashSet<String>,
}

impl ZipStreamWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn member_count(&self) -> usize {
        self.central.len()
    }

    /// Local header for the next member. The caller must emit `data`
    /// immediately after the returned bytes.
    /// Local header for a member whose bytes follow immediately.
    pub fn begin_member(
        &mut self,
        name: &str,
        timestamp: DateTime<Utc>,
        data: &[u8],
    ) -> Result<Vec<u8>, ZipError> {
        self.begin_member_sized(name, timestamp, data.len() as u64, crc32fast::hash(data))
    }

    /// Local header for a member of known length and CRC-32, so the bytes
    /// can be streamed afterwards without holding them.
    pub fn begin_member_sized(
        &mut self,
        name: &str,
        timestamp: DateTime<Utc>,
        len: u64,
        crc: u32,
    ) -> Result<Vec<u8>, ZipError> {
        let size = u32::try_from(len).map_err(|_| ZipError::ArchiveTooLarge)?;
        let offset = u32::try_from(self.offset).map_err(|_| ZipError::ArchiveTooLarge)?;
        if self.central.len() >= u16::MAX as usize {
            return Err(ZipError::ArchiveTooLarge);
        }
        let name = self.unique_name(name);
        let (time, date) = dos_datetime(timestamp);

        let mut header = Vec::with_capacity(30 + name.len());
        put_u32(&mut header, LOCAL_HEADER_SIG);
        put_u16(&mut header, VERSION);
        put_u16(&mut header, FLAG_UTF8);
        put_u16(&mut header, METHOD_STORED);
        put_u16(&mut header, time);
        put_u16(&mut header, date);
        put_u32(&mut header, crc);
        put_u32(&mut header, size);
        put_u32(&mut header, size);
        put_u16(&mut header, name.len() as u16);
        put_u16(&mut header, 0);
        header.extend_from_slice(name.as_bytes());

        self.offset += header.len() as u64 + len;
        self.central.push(CentralRecord {
            name,
            crc,
            size,
            time,
            date,
            offset,
        });
        Ok(header)
    }

    pub fn finish(self) -> Result<Vec<u8>, ZipError> {
        let cd_offset = u32::try_from(self.offset).map_err(|_| ZipError::ArchiveTooLarge)?;
        let mut out = Vec::new();
        for rec in &self.central {
            put_u32(&mut out, CENTRAL_HEADER_SIG);
            put_u16(&mut out, VERSION);
            put_u16(&mut out, VERSION);
            put_u16(&mut out, FLAG_UTF8);
            put_u16(&mut out, METHOD_STORED);
            put_u16(&mut out, rec.time);
            put_u16(&mut out, rec.date);
            put_u32(&mut out, rec.crc);
            put_u32(&mut out, rec.size);
            put_u32(&mut out, rec.size);
            put_u16(&mut out, rec.name.len() as u16);
            put_u16(&mut out, 0); // extra
            put_u16(&mut out, 0); // comment
            put_u16(&mut out, 0); // disk
            put_u16(&mut out, 0); // internal attrs
            put_u32(&mut out, 0); // external attrs
            put_u32(&mut out, rec.offset);
            out.extend_from_slice(rec.name.as_bytes());
        }
        let cd_size = u32::try_from(out.len()).map_err(|_| ZipError::ArchiveTooLarge)?;
        cd_offset
            .checked_add(cd_size)
            .ok_or(ZipError::ArchiveTooLarge)?;
        let count = self.central.len() as u16;
        put_u32(&mut out, END_OF_CENTRAL_SIG);
        put_u16(&mut out, 0);
        put_u16(&mut out, 0);
        put_u16(&mut out, count);
        put_u16(&mut out, count);
        put_u32(&mut out, cd_size);
        put_u32(&mut out, cd_offset);
        put_u16(&mut out, 0);
        Ok(out)
    }

    /// `a.nc`, `a-2.nc`, `a-3.nc`, ...
    fn unique_name(&mut self, name: &str) -> String {
        let name = if name.is_empty() { "file" } else { name };
        if self.names.insert(name.to_string()) {
            return name.to_string();
        }
        let (stem, ext) = match name.rfind('.') {
            Some(dot) if dot > 0 => (&name[..dot], &name[dot..]),
            _ => (name, ""),
        };
        let mut n = 2;
        loop {
            let candidate = format!("{stem}-{n}{ext}");
            if self.names.insert(candidate.clone()) {
                return candidate;
            }
            n += 1;
        }
    }
}

/// Build a complete archive in memory, members ordered by timestamp.
pub fn package_zip(mut entries: Vec<ZipEntry>) -> Result<Vec<u8>, ZipError> {
    if entries.is_empty() {
        return Err(ZipError::EmptySelection);
    }
    entries.sort_by_key(|e| e.timestamp);
    let mut writer = ZipStreamWriter::new();
    let mut out = Vec::new();
    for entry in &entries {
        out.extend(writer.begin_member(&entry.name, entry.timestamp, &entry.content)?);
        out.extend_from_slice(&entry.content);
    }
    out.extend(writer.finish()?);
    Ok(out)
}

fn dos_datetime(ts: DateTime<Utc>) -> (u16, u16) {
    if ts.year() < 1980 {
        return (0, (1 << 5) | 1);
    }
    if ts.year() > 2107 {
        return ((23 << 11) | (59 << 5) | 29, (127 << 9) | (12 << 5) | 31);
    }
    let time = (ts.hour() << 11) | (ts.minute() << 5) | (ts.second() / 2);
    let date = (((ts.year() - 1980) as u32) << 9) | (ts.month() << 5) | ts.day();
    (time as u16, date as u16)
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
