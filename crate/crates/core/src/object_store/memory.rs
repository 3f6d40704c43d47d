// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use bytes::Bytes;
use parking_lot::{Mutex, RwLock};

use super::{
    part_count, ETag, LatencyModel, ListPage, ObjectKey, ObjectRecord, ObjectStore,
    ObjectSummary, OpCounters, StoreError, UserMeta, DEFAULT_MAX_BUCKETS, DEFAULT_PAGE_SIZE,
};
use crate::records::{self, Record};

const DUMP_MAGIC: &[u8; 4] = b"OFSO";

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// `None` disables the virtual clock.
    pub latency: Option<LatencyModel>,
    pub page_size: usize,
    pub max_buckets: usize,
    /// Total payload bytes the store will hold; `None` is unbounded.
    pub capacity_bytes: Option<u64>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            latency: None,
            page_size: DEFAULT_PAGE_SIZE,
            max_buckets: DEFAULT_MAX_BUCKETS,
            capacity_bytes: None,
        }
    }
}

/// Which request kind a [`Fault`] targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultOp {
    Put,
    Get,
    Del,
    Copy,
    List,
}

/// Makes the `skip + 1`-th subsequent matching request fail with
/// [`StoreError::Injected`]. Failed requests have no effect and are not
/// counted.
#[derive(Debug, Clone)]
pub struct Fault {
    pub op: FaultOp,
    pub skip: u64,
    pub name_contains: Option<String>,
}

impl Fault {
    pub fn nth(op: FaultOp, skip: u64) -> Self {
        Fault { op, skip, name_contains: None }
    }
}

#[derive(Debug, Clone)]
struct Stored {
    data: Bytes,
    user_meta: UserMeta,
    etag: ETag,
}

#[derive(Default)]
struct Buckets {
    map: HashMap<String, BTreeMap<String, Stored>>,
    used_bytes: u64,
}

/// Strongly consistent in-memory object store with request counters, fault
/// injection, and an optional virtual clock.
pub struct MemoryStore {
    config: StoreConfig,
    buckets: RwLock<Buckets>,
    counters: Mutex<OpCounters>,
    faults: Mutex<Vec<Fault>>,
}

impl Default for MemoryStore {
    fn default() -> Self {
        MemoryStore::new(StoreConfig::default())
    }
}

impl MemoryStore {
    pub fn new(config: StoreConfig) -> Self {
        MemoryStore {
            config,
            buckets: RwLock::new(Buckets::default()),
            counters: Mutex::new(OpCounters::default()),
            faults: Mutex::new(Vec::new()),
        }
    }

    pub fn with_latency(latency: LatencyModel) -> Self {
        MemoryStore::new(StoreConfig { latency: Some(latency), ..StoreConfig::default() })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn inject_fault(&self, fault: Fault) {
        self.faults.lock().push(fault);
    }

    pub fn clear_faults(&self) {
        self.faults.lock().clear();
    }

    /// Number of objects across all buckets.
    pub fn object_count(&self) -> usize {
        self.buckets.read().map.values().map(BTreeMap::len).sum()
    }

    fn check_fault(&self, op: FaultOp, name: &str) -> Result<(), StoreError> {
        let mut faults = self.faults.lock();
        let hit = faults.iter_mut().position(|f| {
            if f.op != op || f.name_contains.as_deref().is_some_and(|s| !name.contains(s)) {
                return false;
            }
            if f.skip == 0 {
                true
            } else {
                f.skip -= 1;
                false
            }
        });
        match hit {
            Some(i) => {
                faults.remove(i);
                Err(StoreError::Injected(format!("{op:?} {name}")))
            }
            None => Ok(()),
        }
    }

    fn charge(&self, f: impl FnOnce(&mut OpCounters, Option<&LatencyModel>)) {
        let mut c = self.counters.lock();
        f(&mut c, self.config.latency.as_ref());
    }

    fn store_object(
        &self,
        buckets: &mut Buckets,
        key: &ObjectKey,
        data: Bytes,
        user_meta: UserMeta,
    ) -> Result<ETag, StoreError> {
        let objects = buckets
            .map
            .get(&key.bucket)
            .ok_or_else(|| StoreError::UnknownBucket(key.bucket.clone()))?;
        let previous = objects.get(&key.name).map_or(0, |o| o.data.len() as u64);
        let new_used = buckets.used_bytes - previous + data.len() as u64;
        if self.config.capacity_bytes.is_some_and(|cap| new_used > cap) {
            return Err(StoreError::StoreFull);
        }
        let etag = ETag::of(&data);
        buckets.used_bytes = new_used;
        buckets
            .map
            .get_mut(&key.bucket)
            .expect("bucket checked above")
            .insert(key.name.clone(), Stored { data, user_meta, etag: etag.clone() });
        Ok(etag)
    }

    fn lookup<'a>(buckets: &'a Buckets, key: &ObjectKey) -> Result<&'a Stored, StoreError> {
        buckets
            .map
            .get(&key.bucket)
            .ok_or_else(|| StoreError::UnknownBucket(key.bucket.clone()))?
            .get(&key.name)
            .ok_or_else(|| StoreError::NoSuchKey(key.clone()))
    }

    /// Writes every bucket and object to `path`.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let buckets = self.buckets.read();
        let mut w = BufWriter::new(File::create(path)?);
        records::write_header(&mut w, DUMP_MAGIC)?;
        let mut names: Vec<_> = buckets.map.keys().collect();
        names.sort();
        for bucket in names {
            let mut bkey = b"B".to_vec();
            bkey.extend_from_slice(bucket.as_bytes());
            records::write_record(&mut w, &Record::Put(bkey, Vec::new()))?;
            for (name, obj) in &buckets.map[bucket] {
                let mut okey = b"O".to_vec();
                okey.extend_from_slice(bucket.as_bytes());
                okey.push(0);
                okey.extend_from_slice(name.as_bytes());
                let meta = serde_json::to_vec(&obj.user_meta)?;
                let mut val = (meta.len() as u32).to_le_bytes().to_vec();
                val.extend_from_slice(&meta);
                val.extend_from_slice(&obj.data);
                records::write_record(&mut w, &Record::Put(okey, val))?;
            }
        }
        w.flush()
    }

    /// Restores a store written by [`MemoryStore::save`]. Counters start at
    /// zero.
    pub fn load(path: &Path, config: StoreConfig) -> io::Result<Self> {
        let store = MemoryStore::new(config);
        let mut r = BufReader::new(File::open(path)?);
        records::read_header(&mut r, DUMP_MAGIC)?;
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        {
            let mut buckets = store.buckets.write();
            while let Some(rec) = records::read_record(&mut r)? {
                let Record::Put(key, val) = rec else {
                    return Err(bad("unexpected record in object dump"));
                };
                match key.split_first() {
                    Some((b'B', bucket)) => {
                        let bucket = String::from_utf8(bucket.to_vec()).map_err(|_| bad("utf8"))?;
                        buckets.map.entry(bucket).or_default();
                    }
                    Some((b'O', rest)) => {
                        let sep = rest.iter().position(|b| *b == 0).ok_or_else(|| bad("key"))?;
                        let bucket =
                            String::from_utf8(rest[..sep].to_vec()).map_err(|_| bad("utf8"))?;
                        let name =
                            String::from_utf8(rest[sep + 1..].to_vec()).map_err(|_| bad("utf8"))?;
                        if val.len() < 4 {
                            return Err(bad("short object record"));
                        }
                        let meta_len = u32::from_le_bytes(val[..4].try_into().unwrap()) as usize;
                        let meta: UserMeta = serde_json::from_slice(
                            val.get(4..4 + meta_len).ok_or_else(|| bad("meta length"))?,
                        )?;
                        let data = Bytes::copy_from_slice(&val[4 + meta_len..]);
                        buckets.used_bytes += data.len() as u64;
                        let etag = ETag::of(&data);
                        buckets
                            .map
                            .entry(bucket)
                            .or_default()
                            .insert(name, Stored { data, user_meta: meta, etag });
                    }
                    _ => return Err(bad("unknown record tag")),
                }
            }
        }
        Ok(store)
    }
}

impl ObjectStore for MemoryStore {
    fn create_bucket(&self, bucket: &str) -> Result<(), StoreError> {
        if bucket.is_empty() {
            return Err(StoreError::InvalidKey("empty bucket".into()));
        }
        let mut buckets = self.buckets.write();
        if buckets.map.contains_key(bucket) {
            return Err(StoreError::BucketExists(bucket.into()));
        }
        if buckets.map.len() >= self.config.max_buckets {
            return Err(StoreError::TooManyBuckets(self.config.max_buckets));
        }
        buckets.map.insert(bucket.into(), BTreeMap::new());
        Ok(())
    }

    fn bucket_exists(&self, bucket: &str) -> bool {
        self.buckets.read().map.contains_key(bucket)
    }

    fn put(&self, key: &ObjectKey, data: Bytes, user_meta: UserMeta) -> Result<ETag, StoreError> {
        self.check_fault(FaultOp::Put, &key.name)?;
        let len = data.len() as u64;
        let etag = self.store_object(&mut self.buckets.write(), key, data, user_meta)?;
        self.charge(|c, lat| {
            c.puts += 1;
            c.bytes_uploaded += len;
            if let Some(m) = lat {
                c.virtual_ns += m.transfer_ns(len);
            }
        });
        Ok(etag)
    }

    fn get(&self, key: &ObjectKey) -> Result<ObjectRecord, StoreError> {
        self.check_fault(FaultOp::Get, &key.name)?;
        let rec = {
            let buckets = self.buckets.read();
            let obj = Self::lookup(&buckets, key)?;
            ObjectRecord {
                key: key.clone(),
                data: obj.data.clone(),
                user_meta: obj.user_meta.clone(),
                etag: obj.etag.clone(),
            }
        };
        let len = rec.data.len() as u64;
        self.charge(|c, lat| {
            c.gets += 1;
            c.bytes_downloaded += len;
            if let Some(m) = lat {
                c.virtual_ns += m.transfer_ns(len);
            }
        });
        Ok(rec)
    }

    fn get_range(&self, key: &ObjectKey, offset: u64, len: u64) -> Result<Bytes, StoreError> {
        self.check_fault(FaultOp::Get, &key.name)?;
        let data = {
            let buckets = self.buckets.read();
            let obj = Self::lookup(&buckets, key)?;
            let total = obj.data.len() as u64;
            let start = offset.min(total);
            let end = offset.saturating_add(len).min(total);
            obj.data.slice(start as usize..end as usize)
        };
        let n = data.len() as u64;
        self.charge(|c, lat| {
            c.gets += 1;
            c.bytes_downloaded += n;
            if let Some(m) = lat {
                c.virtual_ns += m.transfer_ns(n);
            }
        });
        Ok(data)
    }

    fn del(&self, key: &ObjectKey) -> Result<(), StoreError> {
        self.check_fault(FaultOp::Del, &key.name)?;
        {
            let mut buckets = self.buckets.write();
            let objects = buckets
                .map
                .get_mut(&key.bucket)
                .ok_or_else(|| StoreError::UnknownBucket(key.bucket.clone()))?;
            if let Some(old) = objects.remove(&key.name) {
                buckets.used_bytes -= old.data.len() as u64;
            }
        }
        self.charge(|c, lat| {
            c.dels += 1;
            if let Some(m) = lat {
                c.virtual_ns += m.request_ns();
            }
        });
        Ok(())
    }

    fn list_page(
        &self,
        bucket: &str,
        prefix: &str,
        start_after: Option<&str>,
    ) -> Result<ListPage, StoreError> {
        self.check_fault(FaultOp::List, prefix)?;
        let page = {
            let buckets = self.buckets.read();
            let objects = buckets
                .map
                .get(bucket)
                .ok_or_else(|| StoreError::UnknownBucket(bucket.into()))?;
            let lower = match start_after {
                Some(s) => std::ops::Bound::Excluded(s.to_string()),
                None => std::ops::Bound::Included(prefix.to_string()),
            };
            let page_size = self.config.page_size.max(1);
            let mut entries: Vec<ObjectSummary> = objects
                .range((lower, std::ops::Bound::Unbounded))
                .skip_while(|(name, _)| name.as_str() < prefix)
                .take_while(|(name, _)| name.starts_with(prefix))
                .take(page_size + 1)
                .map(|(name, obj)| ObjectSummary {
                    name: name.clone(),
                    size: obj.data.len() as u64,
                    etag: obj.etag.clone(),
                })
                .collect();
            let next_start_after = if entries.len() > page_size {
                entries.truncate(page_size);
                entries.last().map(|e| e.name.clone())
            } else {
                None
            };
            ListPage { entries, next_start_after }
        };
        self.charge(|c, lat| {
            c.lists += 1;
            if let Some(m) = lat {
                c.virtual_ns += m.request_ns();
            }
        });
        Ok(page)
    }

    fn copy(&self, src: &ObjectKey, dst: &ObjectKey) -> Result<ETag, StoreError> {
        self.check_fault(FaultOp::Copy, &src.name)?;
        let (etag, len) = {
            let mut buckets = self.buckets.write();
            let obj = Self::lookup(&buckets, src)?.clone();
            let len = obj.data.len() as u64;
            (self.store_object(&mut buckets, dst, obj.data, obj.user_meta)?, len)
        };
        self.charge(|c, lat| {
            c.copies += 1;
            if let Some(m) = lat {
                c.virtual_ns += m.copy_ns(len);
            }
        });
        Ok(etag)
    }

    fn multipart_put(
        &self,
        key: &ObjectKey,
        data: Bytes,
        part_size: u64,
        threads: usize,
    ) -> Result<ETag, StoreError> {
        if part_size == 0 || threads == 0 {
            return Err(StoreError::InvalidArgument("part_size and threads must be > 0".into()));
        }
        self.check_fault(FaultOp::Put, &key.name)?;
        let len = data.len() as u64;
        let parts = part_count(len, part_size);
        let etag = self.store_object(&mut self.buckets.write(), key, data, UserMeta::new())?;
        self.charge(|c, lat| {
            c.puts += parts;
            c.bytes_uploaded += len;
            if let Some(m) = lat {
                c.virtual_ns += m.parallel_ns(&part_durations(m, len, part_size), threads);
            }
        });
        Ok(etag)
    }

    fn multipart_get(
        &self,
        key: &ObjectKey,
        part_size: u64,
        threads: usize,
    ) -> Result<Bytes, StoreError> {
        if part_size == 0 || threads == 0 {
            return Err(StoreError::InvalidArgument("part_size and threads must be > 0".into()));
        }
        self.check_fault(FaultOp::Get, &key.name)?;
        let data = Self::lookup(&self.buckets.read(), key)?.data.clone();
        let len = data.len() as u64;
        let parts = part_count(len, part_size);
        self.charge(|c, lat| {
            c.gets += parts;
            c.bytes_downloaded += len;
            if let Some(m) = lat {
                c.virtual_ns += m.parallel_ns(&part_durations(m, len, part_size), threads);
            }
        });
        Ok(data)
    }

    fn put_parallel(
        &self,
        items: Vec<(ObjectKey, Bytes)>,
        threads: usize,
    ) -> Result<Vec<ETag>, StoreError> {
        if threads == 0 {
            return Err(StoreError::InvalidArgument("threads must be > 0".into()));
        }
        let mut sizes = Vec::with_capacity(items.len());
        let mut etags = Vec::with_capacity(items.len());
        let mut outcome = Ok(());
        for (key, data) in items {
            if let Err(e) = self.check_fault(FaultOp::Put, &key.name) {
                outcome = Err(e);
                break;
            }
            let len = data.len() as u64;
            match self.store_object(&mut self.buckets.write(), &key, data, UserMeta::new()) {
                Ok(etag) => etags.push(etag),
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
            sizes.push(len);
        }
        // Requests that completed before a failure still count.
        self.charge(|c, lat| {
            c.puts += sizes.len() as u64;
            c.bytes_uploaded += sizes.iter().sum::<u64>();
            if let Some(m) = lat {
                let ns: Vec<u64> = sizes.iter().map(|b| m.transfer_ns(*b)).collect();
                c.virtual_ns += m.parallel_ns(&ns, threads);
            }
        });
        outcome.map(|()| etags)
    }

    fn get_parallel(&self, keys: &[ObjectKey], threads: usize) -> Result<Vec<Bytes>, StoreError> {
        if threads == 0 {
            return Err(StoreError::InvalidArgument("threads must be > 0".into()));
        }
        let mut out = Vec::with_capacity(keys.len());
        for key in keys {
            self.check_fault(FaultOp::Get, &key.name)?;
            out.push(Self::lookup(&self.buckets.read(), key)?.data.clone());
        }
        self.charge(|c, lat| {
            c.gets += out.len() as u64;
            c.bytes_downloaded += out.iter().map(|d| d.len() as u64).sum::<u64>();
            if let Some(m) = lat {
                let ns: Vec<u64> = out.iter().map(|d| m.transfer_ns(d.len() as u64)).collect();
                c.virtual_ns += m.parallel_ns(&ns, threads);
            }
        });
        Ok(out)
    }

    fn set_user_meta(&self, key: &ObjectKey, meta: UserMeta) -> Result<(), StoreError> {
        {
            let mut buckets = self.buckets.write();
            let obj = buckets
                .map
                .get_mut(&key.bucket)
                .ok_or_else(|| StoreError::UnknownBucket(key.bucket.clone()))?
                .get_mut(&key.name)
                .ok_or_else(|| StoreError::NoSuchKey(key.clone()))?;
            obj.user_meta = meta;
        }
        self.charge(|c, lat| {
            c.meta_ops += 1;
            if let Some(m) = lat {
                c.virtual_ns += m.request_ns();
            }
        });
        Ok(())
    }

    fn get_user_meta(&self, key: &ObjectKey) -> Result<UserMeta, StoreError> {
        let meta = Self::lookup(&self.buckets.read(), key)?.user_meta.clone();
        self.charge(|c, lat| {
            c.meta_ops += 1;
            if let Some(m) = lat {
                c.virtual_ns += m.request_ns();
            }
        });
        Ok(meta)
    }

    fn counters(&self) -> OpCounters {
        *self.counters.lock()
    }

    fn reset_counters(&self) {
        *self.counters.lock() = OpCounters::default();
    }
}

fn part_durations(model: &LatencyModel, len: u64, part_size: u64) -> Vec<u64> {
    let parts = part_count(len, part_size);
    (0..parts)
        .map(|i| {
            let start = i * part_size;
            let size = part_size.min(len - start.min(len));
            model.transfer_ns(size)
        })
        .collect()
}
