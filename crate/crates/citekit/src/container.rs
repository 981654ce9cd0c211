//! Versioned binary container for on-disk artifacts (BM25 index, title trie).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  b"CKCN"
//! version      u16
//! section      u16      1 = bm25 index, 2 = title trie
//! seed         u64      provenance
//! config hash  32 bytes sha-256 of the canonical config
//! payload len  u64
//! payload      …        section-specific, see the owning module
//! ```

use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"CKCN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    Bm25Index = 1,
    TitleTrie = 2,
}

impl SectionKind {
    fn from_u16(v: u16) -> Result<Self> {
        match v {
            1 => Ok(SectionKind::Bm25Index),
            2 => Ok(SectionKind::TitleTrie),
            other => Err(Error::Container(format!("unknown section kind {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContainerHeader {
    pub kind: SectionKind,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

pub fn write_container<W: Write>(
    mut w: W,
    kind: SectionKind,
    seed: u64,
    config_hash: [u8; 32],
    payload: &[u8],
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u16::<LittleEndian>(kind as u16)?;
    w.write_u64::<LittleEndian>(seed)?;
    w.write_all(&config_hash)?;
    w.write_u64::<LittleEndian>(payload.len() as u64)?;
    w.write_all(payload)?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R) -> Result<(ContainerHeader, Vec<u8>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container("bad magic".to_owned()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let kind = SectionKind::from_u16(r.read_u16::<LittleEndian>()?)?;
    let seed = r.read_u64::<LittleEndian>()?;
    let mut config_hash = [0u8; 32];
    r.read_exact(&mut config_hash)?;
    let len = r.read_u64::<LittleEndian>()? as usize;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok((
        ContainerHeader {
            kind,
            seed,
            config_hash,
        },
        payload,
    ))
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Container(format!("invalid utf-8: {e}")))
}
