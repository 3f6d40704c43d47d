// SPDX-License-Identifier: Apache-2.0

//! File data cache between the file system and the object store.
//!
//! `WriteBack` fetches a file's objects into one buffer on first open, serves
//! reads and writes from it, and writes dirty data back on last close.
//! `None` turns every read and write into object-store requests, rewriting
//! whole objects where the layout forces a read-modify-write.

mod range_set;

use std::collections::HashMap;
use std::sync::Arc;

use bytes::Bytes;
use parking_lot::Mutex;

use crate::mapping::{self, ChunkAction, MappingDescriptor};
use crate::metadata::InodeNumber;
use crate::naming::{self, NamingError};
use crate::object_store::{ObjectKey, ObjectStore, StoreError, UserMeta};
use crate::MIB;

pub use range_set::RangeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheKind {
    None,
    WriteBack,
}

impl CacheKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CacheKind::None => "none",
            CacheKind::WriteBack => "writeback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheScope {
    /// Private to one mount.
    Local,
    /// One instance shared by every mount attached to it.
    Unified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachePolicy {
    pub kind: CacheKind,
    pub scope: CacheScope,
    pub capacity_bytes: u64,
    /// One-to-one files at least this large move with multipart transfers.
    pub multipart_threshold: u64,
    pub part_size: u64,
    pub threads: usize,
}

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy::write_back()
    }
}

impl CachePolicy {
    pub fn none() -> Self {
        CachePolicy { kind: CacheKind::None, ..CachePolicy::write_back() }
    }

    pub fn write_back() -> Self {
        CachePolicy {
            kind: CacheKind::WriteBack,
            scope: CacheScope::Local,
            capacity_bytes: 2048 * MIB,
            multipart_threshold: 16 * MIB,
            part_size: 4 * MIB,
            threads: 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache exhausted: need {needed} bytes, {available} available")]
    CacheExhausted { needed: u64, available: u64 },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Naming(#[from] NamingError),
}

/// Where a file's bytes live in the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileObjects {
    pub bucket: String,
    pub base: String,
    pub mapping: MappingDescriptor,
}

impl FileObjects {
    pub fn key(&self, chunk_idx: u64) -> Result<ObjectKey, CacheError> {
        let name = naming::chunk_key(&self.base, chunk_idx, self.mapping.scheme)?;
        Ok(ObjectKey::new(self.bucket.clone(), name)?)
    }

    /// Keys of every object backing a file of `size` bytes, in chunk order.
    pub fn keys(&self, size: u64) -> Result<Vec<ObjectKey>, CacheError> {
        mapping::object_set(&self.mapping, size).into_iter().map(|(i, _)| self.key(i)).collect()
    }
}

#[derive(Debug)]
pub struct CacheEntry {
    pub data: Vec<u8>,
    pub dirty: RangeSet,
    pub open_count: u32,
    /// Size of the file as last written to the store.
    pub stored_size: u64,
}

type EntryKey = (String, InodeNumber);

/// Shared state of one cache instance. Entries are keyed by bucket and
/// inode so several mounts can attach to one instance.
#[derive(Debug)]
pub struct Cache {
    policy: CachePolicy,
    entries: Mutex<HashMap<EntryKey, Arc<Mutex<CacheEntry>>>>,
    used: Mutex<u64>,
}

impl Cache {
    pub fn new(policy: CachePolicy) -> Self {
        Cache { policy, entries: Mutex::new(HashMap::new()), used: Mutex::new(0) }
    }

    pub fn policy(&self) -> &CachePolicy {
        &self.policy
    }

    pub fn used_bytes(&self) -> u64 {
        *self.used.lock()
    }

    fn entry(&self, bucket: &str, ino: InodeNumber) -> Option<Arc<Mutex<CacheEntry>>> {
        self.entries.lock().get(&(bucket.to_string(), ino)).cloned()
    }

    /// Whether `ino` currently has a buffer.
    pub fn is_cached(&self, bucket: &str, ino: InodeNumber) -> bool {
        self.entry(bucket, ino).is_some()
    }

    /// Size the store currently holds for a cached file.
    pub fn stored_size(&self, bucket: &str, ino: InodeNumber) -> Option<u64> {
        self.entry(bucket, ino).map(|e| e.lock().stored_size)
    }

    fn reserve(&self, bytes: u64) -> Result<(), CacheError> {
        let mut used = self.used.lock();
        let available = self.policy.capacity_bytes.saturating_sub(*used);
        if bytes > available {
            return Err(CacheError::CacheExhausted { needed: bytes, available });
        }
        *used += bytes;
        Ok(())
    }

    fn release(&self, bytes: u64) {
        let mut used = self.used.lock();
        *used = used.saturating_sub(bytes);
    }

    /// Opens a file of `size` bytes. `WriteBack` fetches it on the first
    /// open; later opens only bump the count.
    pub fn open(
        &self,
        store: &dyn ObjectStore,
        ino: InodeNumber,
        objects: &FileObjects,
        size: u64,
    ) -> Result<(), CacheError> {
        if self.policy.kind == CacheKind::None {
            return Ok(());
        }
        let key = (objects.bucket.clone(), ino);
        if let Some(e) = self.entries.lock().get(&key) {
            e.lock().open_count += 1;
            return Ok(());
        }
        self.reserve(size)?;
        let data = match self.fetch(store, objects, size) {
            Ok(d) => d,
            Err(e) => {
                self.release(size);
                return Err(e);
            }
        };
        let entry = CacheEntry { data, dirty: RangeSet::new(), open_count: 1, stored_size: size };
        let mut entries = self.entries.lock();
        match entries.get(&key) {
            // Lost a race with another opener: keep theirs.
            Some(e) => {
                e.lock().open_count += 1;
                drop(entries);
                self.release(size);
            }
            None => {
                entries.insert(key, Arc::new(Mutex::new(entry)));
            }
        }
        Ok(())
    }

    fn fetch(
        &self,
        store: &dyn ObjectStore,
        objects: &FileObjects,
        size: u64,
    ) -> Result<Vec<u8>, CacheError> {
        if size == 0 {
            return Ok(Vec::new());
        }
        let mut data = if objects.mapping.is_chunked() {
            let keys: Vec<ObjectKey> = mapping::layout(&objects.mapping, size)
                .into_iter()
                .map(|(i, _)| objects.key(i))
                .collect::<Result<_, _>>()?;
            let parts = store.get_parallel(&keys, self.policy.threads)?;
            let mut buf = Vec::with_capacity(size as usize);
            for p in parts {
                buf.extend_from_slice(&p);
            }
            buf
        } else {
            let key = objects.key(0)?;
            let bytes = if size >= self.policy.multipart_threshold {
                store.multipart_get(&key, self.policy.part_size, self.policy.threads)?
            } else {
                store.get(&key)?.data
            };
            Vec::from(bytes)
        };
        data.resize(size as usize, 0);
        Ok(data)
    }

    /// Reads up to `len` bytes at `offset` from a file of `size` bytes.
    pub fn read(
        &self,
        store: &dyn ObjectStore,
        ino: InodeNumber,
        objects: &FileObjects,
        size: u64,
        offset: u64,
        len: u64,
    ) -> Result<Vec<u8>, CacheError> {
        if let Some(e) = self.entry(&objects.bucket, ino) {
            let e = e.lock();
            let size = e.data.len() as u64;
            let start = offset.min(size) as usize;
            let end = offset.saturating_add(len).min(size) as usize;
            return Ok(e.data[start..end].to_vec());
        }
        let end = offset.saturating_add(len).min(size);
        if offset >= end {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity((end - offset) as usize);
        for span in mapping::locate(&objects.mapping, offset, end - offset, size) {
            let key = objects.key(span.chunk_idx)?;
            out.extend_from_slice(&store.get_range(&key, span.intra_offset, span.span_len)?);
        }
        out.resize((end - offset) as usize, 0);
        Ok(out)
    }

    /// Writes `data` at `offset` into a file of `size` bytes and returns the
    /// new size.
    pub fn write(
        &self,
        store: &dyn ObjectStore,
        ino: InodeNumber,
        objects: &FileObjects,
        size: u64,
        offset: u64,
        data: &[u8],
    ) -> Result<u64, CacheError> {
        let end = offset + data.len() as u64;
        if let Some(e) = self.entry(&objects.bucket, ino) {
            let mut e = e.lock();
            let old = e.data.len() as u64;
            if end > old {
                self.reserve(end - old)?;
                e.data.resize(end as usize, 0);
                // A gap left by writing past EOF reads back as zeros.
                e.dirty.insert(old, offset);
            }
            e.data[offset as usize..end as usize].copy_from_slice(data);
            e.dirty.insert(offset, end);
            return Ok(e.data.len() as u64);
        }
        if data.is_empty() {
            return Ok(size);
        }
        // Any gap between EOF and the write becomes explicit zeros.
        let start = offset.min(size);
        let mut payload = vec![0u8; (offset - start) as usize];
        payload.extend_from_slice(data);
        let desc = &objects.mapping;
        let mut cursor = 0usize;
        for step in mapping::write_plan(desc, start, payload.len() as u64, size) {
            let span = step.span;
            let piece = &payload[cursor..cursor + span.span_len as usize];
            cursor += span.span_len as usize;
            let key = objects.key(span.chunk_idx)?;
            let body = match step.action {
                ChunkAction::FullOverwrite if span.intra_offset == 0 => piece.to_vec(),
                ChunkAction::FullOverwrite => {
                    let mut b = vec![0u8; span.intra_offset as usize];
                    b.extend_from_slice(piece);
                    b
                }
                ChunkAction::ReadModifyWrite => {
                    let mut b = Vec::from(store.get(&key)?.data);
                    let lo = span.intra_offset as usize;
                    let hi = lo + piece.len();
                    if b.len() < hi {
                        b.resize(hi, 0);
                    }
                    b[lo..hi].copy_from_slice(piece);
                    b
                }
            };
            store.put(&key, Bytes::from(body), UserMeta::new())?;
        }
        Ok(size.max(end))
    }

    /// Resizes a file. Cached files change in the buffer; others are
    /// rewritten in the store right away.
    pub fn truncate(
        &self,
        store: &dyn ObjectStore,
        ino: InodeNumber,
        objects: &FileObjects,
        size: u64,
        new_size: u64,
    ) -> Result<(), CacheError> {
        if let Some(e) = self.entry(&objects.bucket, ino) {
            let mut e = e.lock();
            let old = e.data.len() as u64;
            if new_size > old {
                self.reserve(new_size - old)?;
                e.dirty.insert(old, new_size);
            } else {
                self.release(old - new_size);
                e.dirty.truncate(new_size);
            }
            e.data.resize(new_size as usize, 0);
            return Ok(());
        }
        if size == new_size {
            return Ok(());
        }
        reconcile(store, objects, Some(size), new_size, &self.policy, |idx, len, old_len| {
            let mut body = if old_len > 0 {
                let keep = old_len.min(len);
                Vec::from(store.get_range(&objects.key(idx)?, 0, keep)?)
            } else {
                Vec::new()
            };
            body.resize(len as usize, 0);
            Ok(Some(body))
        })
    }

    /// Drops one open reference. On the last one a dirty buffer is written
    /// back and the entry evicted; with `discard` the data is thrown away
    /// instead (the file is gone). Returns the size written back, if any.
    pub fn close(
        &self,
        store: &dyn ObjectStore,
        ino: InodeNumber,
        objects: &FileObjects,
        discard: bool,
    ) -> Result<Option<u64>, CacheError> {
        let key = (objects.bucket.clone(), ino);
        let Some(arc) = self.entries.lock().get(&key).cloned() else {
            return Ok(None);
        };
        let mut e = arc.lock();
        e.open_count = e.open_count.saturating_sub(1);
        if e.open_count > 0 {
            return Ok(None);
        }
        let mut flushed = None;
        if !discard {
            let size = e.data.len() as u64;
            if !e.dirty.is_empty() || size != e.stored_size {
                self.flush(store, objects, &mut e)?;
                flushed = Some(size);
            }
        }
        let len = e.data.len() as u64;
        drop(e);
        let mut entries = self.entries.lock();
        // A concurrent open may have revived the entry while we flushed.
        if arc.lock().open_count == 0 {
            entries.remove(&key);
            self.release(len);
        }
        Ok(flushed)
    }

    fn flush(
        &self,
        store: &dyn ObjectStore,
        objects: &FileObjects,
        e: &mut CacheEntry,
    ) -> Result<(), CacheError> {
        let size = e.data.len() as u64;
        let desc = objects.mapping;
        if !desc.is_chunked() {
            let key = objects.key(0)?;
            let body = Bytes::from(std::mem::take(&mut e.data));
            let res = if size >= self.policy.multipart_threshold {
                store.multipart_put(&key, body.clone(), self.policy.part_size, self.policy.threads)
            } else {
                store.put(&key, body.clone(), UserMeta::new())
            };
            e.data = Vec::from(body);
            res?;
        } else {
            let dirty = &e.dirty;
            let data = &e.data;
            let mut uploads = Vec::new();
            let stored = e.stored_size;
            let old: HashMap<u64, u64> = mapping::object_set(&desc, stored).into_iter().collect();
            for (idx, len) in mapping::object_set(&desc, size) {
                let (start, end) = desc.chunk_bounds(idx);
                let changed = old.get(&idx) != Some(&len) || dirty.intersects(start, end);
                if changed {
                    let lo = start as usize;
                    let body = Bytes::copy_from_slice(&data[lo..lo + len as usize]);
                    uploads.push((objects.key(idx)?, body));
                }
            }
            if !uploads.is_empty() {
                store.put_parallel(uploads, self.policy.threads)?;
            }
            for (&idx, _) in old.iter().filter(|(i, _)| desc.chunk_len(**i, size) == 0 && **i > 0) {
                store.del(&objects.key(idx)?)?;
            }
        }
        e.dirty.clear();
        e.stored_size = size;
        Ok(())
    }
}

/// Brings the objects of a file stored at `old_size` (or not at all) in line
/// with `new_size`: chunks whose length differs are rebuilt by `body`
/// (`idx, new_len, old_len`), and chunks past the new layout are deleted.
fn reconcile(
    store: &dyn ObjectStore,
    objects: &FileObjects,
    old_size: Option<u64>,
    new_size: u64,
    policy: &CachePolicy,
    mut body: impl FnMut(u64, u64, u64) -> Result<Option<Vec<u8>>, CacheError>,
) -> Result<(), CacheError> {
    let desc = &objects.mapping;
    let old: HashMap<u64, u64> = old_size
        .map(|s| mapping::object_set(desc, s).into_iter().collect())
        .unwrap_or_default();
    for (idx, len) in mapping::object_set(desc, new_size) {
        let old_len = old.get(&idx).copied();
        if old_len == Some(len) {
            continue;
        }
        if let Some(b) = body(idx, len, old_len.unwrap_or(0))? {
            let key = objects.key(idx)?;
            if !desc.is_chunked() && len >= policy.multipart_threshold {
                store.multipart_put(&key, Bytes::from(b), policy.part_size, policy.threads)?;
            } else {
                store.put(&key, Bytes::from(b), UserMeta::new())?;
            }
        }
    }
    let mut stale: Vec<u64> =
        old.keys().copied().filter(|&i| i > 0 && desc.chunk_len(i, new_size) == 0).collect();
    stale.sort_unstable();
    for idx in stale {
        store.del(&objects.key(idx)?)?;
    }
    Ok(())
}

/// Writes the objects of a new, empty file.
pub fn create_objects(store: &dyn ObjectStore, objects: &FileObjects) -> Result<(), CacheError> {
    for key in objects.keys(0)? {
        store.put(&key, Bytes::new(), UserMeta::new())?;
    }
    Ok(())
}

/// Deletes every object of a file of `size` bytes.
pub fn delete_objects(
    store: &dyn ObjectStore,
    objects: &FileObjects,
    size: u64,
) -> Result<(), CacheError> {
    for key in objects.keys(size)? {
        store.del(&key)?;
    }
    Ok(())
}

/// Reads a whole file straight from its objects, bypassing any cache.
pub fn read_objects(
    store: &dyn ObjectStore,
    objects: &FileObjects,
    size: u64,
) -> Result<Vec<u8>, CacheError> {
    let mut out = Vec::with_capacity(size as usize);
    for key in objects.keys(size)? {
        out.extend_from_slice(&store.get(&key)?.data);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object_store::{Fault, FaultOp, MemoryStore, StoreConfig};

    const M: u64 = MIB;

    fn setup(desc: MappingDescriptor) -> (MemoryStore, FileObjects) {
        let store = MemoryStore::new(StoreConfig::default());
        store.create_bucket("b").unwrap();
        let objects = FileObjects { bucket: "b".into(), base: "f".into(), mapping: desc };
        create_objects(&store, &objects).unwrap();
        store.reset_counters();
        (store, objects)
    }

    fn pattern(len: u64, seed: u8) -> Vec<u8> {
        (0..len).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect()
    }

    fn fill(store: &MemoryStore, objects: &FileObjects, data: &[u8]) {
        let none = Cache::new(CachePolicy::none());
        none.write(store, InodeNumber(2), objects, 0, 0, data).unwrap();
        store.reset_counters();
    }

    #[test]
    fn none_one_to_one_interior_write_is_read_modify_write() {
        let (store, obj) = setup(MappingDescriptor::one_to_one());
        fill(&store, &obj, &pattern(64 * M, 1));
        let c = Cache::new(CachePolicy::none());
        c.write(&store, InodeNumber(2), &obj, 64 * M, 8 * M, &pattern(4 * M, 9)).unwrap();
        let k = store.counters();
        assert_eq!((k.gets, k.puts), (1, 1));
        assert_eq!((k.bytes_downloaded, k.bytes_uploaded), (64 * M, 64 * M));
    }

    #[test]
    fn none_one_to_n_aligned_write_is_blind() {
        let (store, obj) = setup(MappingDescriptor::one_to_n(4 * M));
        fill(&store, &obj, &pattern(64 * M, 1));
        let c = Cache::new(CachePolicy::none());
        c.write(&store, InodeNumber(2), &obj, 64 * M, 8 * M, &pattern(4 * M, 9)).unwrap();
        let k = store.counters();
        assert_eq!((k.gets, k.puts, k.bytes_uploaded), (0, 1, 4 * M));
    }

    #[test]
    fn none_read_one_chunk_is_one_get() {
        let (store, obj) = setup(MappingDescriptor::one_to_n(4 * M));
        let data = pattern(10 * M, 3);
        fill(&store, &obj, &data);
        let c = Cache::new(CachePolicy::none());
        let got = c.read(&store, InodeNumber(2), &obj, 10 * M, 4 * M, 4 * M).unwrap();
        assert_eq!(got, &data[4 * M as usize..8 * M as usize]);
        assert_eq!(store.counters().gets, 1);
        let tail = c.read(&store, InodeNumber(2), &obj, 10 * M, 9 * M, 4 * M).unwrap();
        assert_eq!(tail.len() as u64, M);
    }

    #[test]
    fn write_back_defers_until_close() {
        let (store, obj) = setup(MappingDescriptor::one_to_one());
        let c = Cache::new(CachePolicy::write_back());
        let ino = InodeNumber(2);
        c.open(&store, ino, &obj, 0).unwrap();
        let mut size = 0;
        for i in 0..16u64 {
            size = c.write(&store, ino, &obj, size, i * 4 * M, &pattern(4 * M, i as u8)).unwrap();
        }
        assert_eq!(store.counters().puts, 0);
        // Staleness window: the store still has the old bytes.
        assert_eq!(store.get(&obj.key(0).unwrap()).unwrap().data.len(), 0);
        store.reset_counters();
        assert_eq!(c.close(&store, ino, &obj, false).unwrap(), Some(64 * M));
        let k = store.counters();
        assert_eq!((k.puts, k.gets), (16, 0));
        assert!(!c.is_cached("b", ino));
        assert_eq!(c.used_bytes(), 0);
    }

    #[test]
    fn nested_open_does_not_refetch_and_clean_close_is_free() {
        let (store, obj) = setup(MappingDescriptor::one_to_one());
        fill(&store, &obj, &pattern(64 * M, 1));
        let c = Cache::new(CachePolicy::write_back());
        let ino = InodeNumber(2);
        c.open(&store, ino, &obj, 64 * M).unwrap();
        assert_eq!(store.counters().gets, 16);
        c.open(&store, ino, &obj, 64 * M).unwrap();
        assert_eq!(store.counters().gets, 16);
        c.read(&store, ino, &obj, 64 * M, 100, 5 * M).unwrap();
        assert_eq!(store.counters().gets, 16);
        assert_eq!(c.close(&store, ino, &obj, false).unwrap(), None);
        assert_eq!(c.close(&store, ino, &obj, false).unwrap(), None);
        assert_eq!(store.counters().puts, 0);
    }

    #[test]
    fn empty_file_open_fetches_nothing() {
        let (store, obj) = setup(MappingDescriptor::one_to_n(M));
        let c = Cache::new(CachePolicy::write_back());
        c.open(&store, InodeNumber(2), &obj, 0).unwrap();
        assert_eq!(store.counters().gets, 0);
    }

    #[test]
    fn one_to_n_flush_writes_dirty_chunks_only() {
        let (store, obj) = setup(MappingDescriptor::one_to_n(4 * M));
        let data = pattern(64 * M, 5);
        fill(&store, &obj, &data);
        let c = Cache::new(CachePolicy::write_back());
        let ino = InodeNumber(2);
        c.open(&store, ino, &obj, 64 * M).unwrap();
        c.write(&store, ino, &obj, 64 * M, 4 * M + 10, b"xyz").unwrap();
        c.write(&store, ino, &obj, 64 * M, 40 * M, b"abc").unwrap();
        store.reset_counters();
        c.close(&store, ino, &obj, false).unwrap();
        assert_eq!(store.counters().puts, 2);
    }

    #[test]
    fn shrinking_cached_file_deletes_tail_chunks() {
        let (store, obj) = setup(MappingDescriptor::one_to_n(4 * M));
        fill(&store, &obj, &pattern(10 * M, 5));
        let c = Cache::new(CachePolicy::write_back());
        let ino = InodeNumber(2);
        c.open(&store, ino, &obj, 10 * M).unwrap();
        c.truncate(&store, ino, &obj, 10 * M, 4 * M).unwrap();
        store.reset_counters();
        c.close(&store, ino, &obj, false).unwrap();
        let k = store.counters();
        assert_eq!((k.puts, k.dels), (0, 2));
        let names: Vec<_> = store.list("b", "").unwrap().into_iter().map(|s| s.name).collect();
        assert_eq!(names, ["f.c00000000"]);
    }

    #[test]
    fn flush_failure_keeps_entry_dirty() {
        let (store, obj) = setup(MappingDescriptor::one_to_one());
        let c = Cache::new(CachePolicy::write_back());
        let ino = InodeNumber(2);
        c.open(&store, ino, &obj, 0).unwrap();
        c.write(&store, ino, &obj, 0, 0, b"hello").unwrap();
        store.inject_fault(Fault::nth(FaultOp::Put, 0));
        assert!(c.close(&store, ino, &obj, false).is_err());
        assert!(c.is_cached("b", ino));
        c.open(&store, ino, &obj, 5).unwrap();
        assert_eq!(c.close(&store, ino, &obj, false).unwrap(), Some(5));
        assert_eq!(&store.get(&obj.key(0).unwrap()).unwrap().data[..], b"hello");
    }

    #[test]
    fn capacity_overflow_fails_fast() {
        let (store, obj) = setup(MappingDescriptor::one_to_one());
        fill(&store, &obj, &pattern(8 * M, 1));
        let c = Cache::new(CachePolicy { capacity_bytes: 4 * M, ..CachePolicy::write_back() });
        let err = c.open(&store, InodeNumber(2), &obj, 8 * M).unwrap_err();
        assert!(matches!(err, CacheError::CacheExhausted { .. }));
        assert_eq!(store.counters().gets, 0);
        assert!(!c.is_cached("b", InodeNumber(2)));
    }

    #[test]
    fn write_past_eof_zero_fills_both_policies() {
        for policy in [CachePolicy::none(), CachePolicy::write_back()] {
            for desc in [MappingDescriptor::one_to_one(), MappingDescriptor::one_to_n(8)] {
                let (store, obj) = setup(desc);
                let c = Cache::new(policy.clone());
                let ino = InodeNumber(2);
                c.open(&store, ino, &obj, 0).unwrap();
                let size = c.write(&store, ino, &obj, 0, 0, b"abc").unwrap();
                let size = c.write(&store, ino, &obj, size, 20, b"xy").unwrap();
                assert_eq!(size, 22);
                let mut want = b"abc".to_vec();
                want.resize(20, 0);
                want.extend_from_slice(b"xy");
                assert_eq!(c.read(&store, ino, &obj, size, 0, 100).unwrap(), want);
                c.close(&store, ino, &obj, false).unwrap();
                assert_eq!(read_objects(&store, &obj, size).unwrap(), want);
            }
        }
    }
}
