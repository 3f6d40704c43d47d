// SPDX-License-Identifier: Apache-2.0

//! Length-prefixed binary record files.
//!
//! A file starts with a 4-byte magic and a one-byte version, followed by
//! records of the form `(key_len: u32 LE, key, val_len: u32 LE, val)`.
//! A `val_len` of `u32::MAX` marks a deletion (no value bytes follow) and a
//! zero-length key marks a commit boundary in write-ahead logs.

use std::io::{self, Read, Write};

pub const VERSION: u8 = 1;
pub const TOMBSTONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Put(Vec<u8>, Vec<u8>),
    Delete(Vec<u8>),
    Commit,
}

pub fn write_header<W: Write>(w: &mut W, magic: &[u8; 4]) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&[VERSION])
}

pub fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> io::Result<()> {
    let mut buf = [0u8; 5];
    r.read_exact(&mut buf)?;
    if &buf[..4] != magic {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    if buf[4] != VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported version {}", buf[4]),
        ));
    }
    Ok(())
}

fn len_u32(len: usize) -> io::Result<u32> {
    u32::try_from(len)
        .ok()
        .filter(|l| *l != TOMBSTONE)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "record too large"))
}

pub fn write_record<W: Write>(w: &mut W, record: &Record) -> io::Result<()> {
    match record {
        Record::Put(key, val) => {
            w.write_all(&len_u32(key.len())?.to_le_bytes())?;
            w.write_all(key)?;
            w.write_all(&len_u32(val.len())?.to_le_bytes())?;
            w.write_all(val)
        }
        Record::Delete(key) => {
            w.write_all(&len_u32(key.len())?.to_le_bytes())?;
            w.write_all(key)?;
            w.write_all(&TOMBSTONE.to_le_bytes())
        }
        Record::Commit => {
            w.write_all(&0u32.to_le_bytes())?;
            w.write_all(&0u32.to_le_bytes())
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, len: u32) -> io::Result<Vec<u8>> {
    let mut v = vec![0u8; len as usize];
    r.read_exact(&mut v)?;
    Ok(v)
}

/// Reads the next record. `Ok(None)` at a clean end of input; a record cut
/// short mid-way yields `UnexpectedEof`.
pub fn read_record<R: Read>(r: &mut R) -> io::Result<Option<Record>> {
    let mut first = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut first[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let key_len = u32::from_le_bytes(first);
    let key = read_bytes(r, key_len)?;
    let val_len = read_u32(r)?;
    if key_len == 0 {
        return Ok(Some(Record::Commit));
    }
    if val_len == TOMBSTONE {
        return Ok(Some(Record::Delete(key)));
    }
    Ok(Some(Record::Put(key, read_bytes(r, val_len)?)))
}
