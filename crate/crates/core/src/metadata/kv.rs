// SPDX-License-Identifier: Apache-2.0

//! In-process transactional key-value store with snapshot + write-ahead log
//! persistence.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Seek, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use crate::records::{self, Record};

pub const MAGIC: &[u8; 4] = b"OFSM";
pub const SNAPSHOT_FILE: &str = "meta.snap";
pub const WAL_FILE: &str = "meta.wal";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("transaction conflict on key {0:?}")]
    TxnConflict(String),
    #[error("persistence error: {0}")]
    Io(String),
}

impl From<io::Error> for KvError {
    fn from(e: io::Error) -> Self {
        KvError::Io(e.to_string())
    }
}

/// One step of a [`KvStore::apply`] batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KvOp {
    Put(Vec<u8>, Vec<u8>),
    Del(Vec<u8>),
    /// Abort the batch unless `key` currently holds `value` (`None`: absent).
    Expect(Vec<u8>, Option<Vec<u8>>),
}

type Map = BTreeMap<Vec<u8>, Vec<u8>>;

struct Persist {
    dir: PathBuf,
    wal: BufWriter<File>,
}

struct Inner {
    map: Map,
    persist: Option<Persist>,
}

/// Staged reads and writes of one transaction. Reads see the transaction's
/// own writes.
pub struct Txn<'a> {
    base: &'a Map,
    writes: BTreeMap<Vec<u8>, Option<Vec<u8>>>,
}

impl Txn<'_> {
    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        match self.writes.get(key) {
            Some(staged) => staged.clone(),
            None => self.base.get(key).cloned(),
        }
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        match self.writes.get(key) {
            Some(staged) => staged.is_some(),
            None => self.base.contains_key(key),
        }
    }

    pub fn put(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.writes.insert(key, Some(value));
    }

    pub fn del(&mut self, key: Vec<u8>) {
        self.writes.insert(key, None);
    }

    /// All live `(key, value)` pairs whose key starts with `prefix`, sorted.
    pub fn scan_prefix(&self, prefix: &[u8]) -> Vec<(Vec<u8>, Vec<u8>)> {
        let range = (Bound::Included(prefix.to_vec()), Bound::Unbounded);
        let mut merged: BTreeMap<Vec<u8>, Vec<u8>> = self
            .base
            .range::<Vec<u8>, _>(range.clone())
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for (k, v) in self.writes.range::<Vec<u8>, _>(range).take_while(|(k, _)| k.starts_with(prefix))
        {
            match v {
                Some(v) => merged.insert(k.clone(), v.clone()),
                None => merged.remove(k),
            };
        }
        merged.into_iter().collect()
    }

    /// Whether any live key starts with `prefix`.
    pub fn has_prefix(&self, prefix: &[u8]) -> bool {
        !self.scan_prefix(prefix).is_empty()
    }
}

/// Serializable store: transactions run one at a time under a lock, so every
/// committed transaction sees a consistent state and commits atomically.
pub struct KvStore {
    inner: Mutex<Inner>,
}

impl Default for KvStore {
    fn default() -> Self {
        KvStore::in_memory()
    }
}

impl KvStore {
    pub fn in_memory() -> Self {
        KvStore { inner: Mutex::new(Inner { map: Map::new(), persist: None }) }
    }

    /// Opens (or creates) a store persisted in `dir`: loads the snapshot,
    /// replays complete WAL batches, and appends further commits to the WAL.
    pub fn open(dir: &Path) -> Result<Self, KvError> {
        fs::create_dir_all(dir)?;
        let mut map = Map::new();
        let snap = dir.join(SNAPSHOT_FILE);
        if snap.exists() {
            let mut r = BufReader::new(File::open(&snap)?);
            records::read_header(&mut r, MAGIC)?;
            while let Some(rec) = records::read_record(&mut r)? {
                match rec {
                    Record::Put(k, v) => {
                        map.insert(k, v);
                    }
                    _ => return Err(KvError::Io("snapshot holds a non-put record".into())),
                }
            }
        }
        let wal_path = dir.join(WAL_FILE);
        if wal_path.exists() {
            let valid = replay_wal(&wal_path, &mut map)?;
            let f = OpenOptions::new().write(true).open(&wal_path)?;
            if f.metadata()?.len() > valid {
                f.set_len(valid)?;
            }
        }
        let wal = open_wal(&wal_path)?;
        Ok(KvStore {
            inner: Mutex::new(Inner {
                map,
                persist: Some(Persist { dir: dir.to_path_buf(), wal }),
            }),
        })
    }

    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.inner.lock().map.get(key).cloned()
    }

    pub fn put(&self, key: Vec<u8>, value: Vec<u8>) -> Result<(), KvError> {
        self.apply(vec![KvOp::Put(key, value)])
    }

    pub fn del(&self, key: Vec<u8>) -> Result<(), KvError> {
        self.apply(vec![KvOp::Del(key)])
    }

    pub fn scan_prefix(&self, prefix: &[u8]) -> Vec<(Vec<u8>, Vec<u8>)> {
        self.read(|t| t.scan_prefix(prefix))
    }

    /// Applies a batch atomically: every op or none.
    pub fn apply(&self, ops: Vec<KvOp>) -> Result<(), KvError> {
        self.transaction(|t| {
            for op in ops {
                match op {
                    KvOp::Put(k, v) => t.put(k, v),
                    KvOp::Del(k) => t.del(k),
                    KvOp::Expect(k, expected) => {
                        if t.get(&k) != expected {
                            return Err(KvError::TxnConflict(String::from_utf8_lossy(&k).into()));
                        }
                    }
                }
            }
            Ok(())
        })
    }

    /// Runs `f` against a private view; commits its writes only if it
    /// returns `Ok`.
    pub fn transaction<T, E>(&self, f: impl FnOnce(&mut Txn<'_>) -> Result<T, E>) -> Result<T, E>
    where
        E: From<KvError>,
    {
        let mut inner = self.inner.lock();
        let (out, writes) = {
            let mut txn = Txn { base: &inner.map, writes: BTreeMap::new() };
            let out = f(&mut txn)?;
            (out, txn.writes)
        };
        if writes.is_empty() {
            return Ok(out);
        }
        if let Some(p) = inner.persist.as_mut() {
            log_batch(&mut p.wal, &writes).map_err(KvError::from)?;
        }
        for (k, v) in writes {
            match v {
                Some(v) => inner.map.insert(k, v),
                None => inner.map.remove(&k),
            };
        }
        Ok(out)
    }

    /// Read-only view; nothing is committed.
    pub fn read<T>(&self, f: impl FnOnce(&Txn<'_>) -> T) -> T {
        let inner = self.inner.lock();
        let txn = Txn { base: &inner.map, writes: BTreeMap::new() };
        f(&txn)
    }

    /// Writes the whole map to the snapshot file and starts a fresh WAL.
    /// A no-op for in-memory stores.
    pub fn snapshot(&self) -> Result<(), KvError> {
        let mut inner = self.inner.lock();
        let Inner { map, persist } = &mut *inner;
        let Some(p) = persist.as_mut() else {
            return Ok(());
        };
        let tmp = p.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            write_snapshot(&mut w, map)?;
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(&tmp, p.dir.join(SNAPSHOT_FILE))?;
        let wal_path = p.dir.join(WAL_FILE);
        fs::remove_file(&wal_path)?;
        p.wal = open_wal(&wal_path)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn write_snapshot<W: Write>(w: &mut W, map: &BTreeMap<Vec<u8>, Vec<u8>>) -> io::Result<()> {
    records::write_header(w, MAGIC)?;
    for (k, v) in map {
        records::write_record(w, &Record::Put(k.clone(), v.clone()))?;
    }
    Ok(())
}

fn open_wal(path: &Path) -> io::Result<BufWriter<File>> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    if fresh {
        records::write_header(&mut w, MAGIC)?;
        w.flush()?;
    }
    Ok(w)
}

fn log_batch(
    wal: &mut BufWriter<File>,
    writes: &BTreeMap<Vec<u8>, Option<Vec<u8>>>,
) -> io::Result<()> {
    for (k, v) in writes {
        let rec = match v {
            Some(v) => Record::Put(k.clone(), v.clone()),
            None => Record::Delete(k.clone()),
        };
        records::write_record(wal, &rec)?;
    }
    records::write_record(wal, &Record::Commit)?;
    wal.flush()
}

/// Applies every batch that ends in a commit marker and returns the byte
/// length of that valid prefix. A torn tail is dropped.
fn replay_wal(path: &Path, map: &mut Map) -> Result<u64, KvError> {
    let mut r = BufReader::new(File::open(path)?);
    if fs::metadata(path)?.len() == 0 {
        return Ok(0);
    }
    records::read_header(&mut r, MAGIC)?;
    let mut valid = r.stream_position()?;
    let mut pending = Vec::new();
    loop {
        match records::read_record(&mut r) {
            Ok(Some(Record::Commit)) => {
                valid = r.stream_position()?;
                for rec in pending.drain(..) {
                    match rec {
                        Record::Put(k, v) => {
                            map.insert(k, v);
                        }
                        Record::Delete(k) => {
                            map.remove(&k);
                        }
                        Record::Commit => unreachable!(),
                    }
                }
            }
            Ok(Some(rec)) => pending.push(rec),
            Ok(None) => break,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(valid)
}
