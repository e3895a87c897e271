//! CAPO object files.
//!
//! Layout, all integers most significant byte first:
//! `"CAPO"`, version (1 byte), fingerprint (W bits, A bytes), entry offset
//! (4), code length (4), code, symbol count (4), then per symbol a 2-byte
//! name length, the name, and a 4-byte offset.

use thiserror::Error;

use crate::machine::MachineConfig;

use super::{decode_at, DecodeError, MapEntry, ObjectImage};

pub const CAPO_MAGIC: [u8; 4] = *b"CAPO";
pub const CAPO_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapoError {
    #[error("not a CAPO file")]
    BadMagic,
    #[error("unsupported CAPO version {0}")]
    BadVersion(u8),
    #[error("file ends inside the {0}")]
    Truncated(&'static str),
    #[error("symbol name is not UTF-8")]
    BadSymbol,
    #[error("object was built for W={0} A={1}, machine has W={2} A={3}")]
    FingerprintMismatch(u8, u8, u8, u8),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub fn write_capo(image: &ObjectImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + image.bytes.len());
    out.extend_from_slice(&CAPO_MAGIC);
    out.push(CAPO_VERSION);
    out.extend_from_slice(&image.fingerprint);
    out.extend_from_slice(&image.entry_offset.to_be_bytes());
    out.extend_from_slice(&(image.bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&image.bytes);
    out.extend_from_slice(&(image.symbols.len() as u32).to_be_bytes());
    for (name, offset) in &image.symbols {
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&offset.to_be_bytes());
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CapoError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.data.len()).ok_or(CapoError::Truncated(what))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CapoError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Reads an object file and rebuilds its instruction map by decoding the
/// code under `config`, whose fingerprint must match the file's.
pub fn read_capo(data: &[u8], config: &MachineConfig) -> Result<ObjectImage, CapoError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4, "header")? != CAPO_MAGIC {
        return Err(CapoError::BadMagic);
    }
    let version = r.take(1, "header")?[0];
    if version != CAPO_VERSION {
        return Err(CapoError::BadVersion(version));
    }
    let fp = r.take(2, "header")?;
    let fingerprint = [fp[0], fp[1]];
    let mine = config.fingerprint();
    if fingerprint != mine {
        return Err(CapoError::FingerprintMismatch(fp[0], fp[1], mine[0], mine[1]));
    }
    let entry_offset = r.u32("header")?;
    let len = r.u32("header")? as usize;
    let bytes = r.take(len, "code")?.to_vec();
    let count = r.u32("symbol table")?;
    let mut symbols = Vec::new();
    for _ in 0..count {
        let n = r.take(2, "symbol table")?;
        let n = usize::from(u16::from_be_bytes([n[0], n[1]]));
        let name = std::str::from_utf8(r.take(n, "symbol table")?).map_err(|_| CapoError::BadSymbol)?;
        let offset = r.u32("symbol table")?;
        symbols.push((name.to_string(), offset));
    }

    let fetch = |i: u64| bytes.get(i as usize).copied();
    let mut map = Vec::new();
    let mut offset = 0u64;
    while (offset as usize) < bytes.len() {
        let (_, n) = decode_at(&fetch, offset, config)?;
        map.push(MapEntry { offset: offset as u32, length: n as u32, line: None });
        offset += n as u64;
    }
    Ok(ObjectImage { bytes, entry_offset, symbols, map, fingerprint })
}
