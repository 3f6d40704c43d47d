// SPDX-License-Identifier: Apache-2.0

//! Generic object-store interface.
//!
//! The file system only ever talks to storage through [`ObjectStore`]: whole
//! object `put`/`get`/`del`, `list`, server-side `copy`, multipart transfer,
//! and user-defined metadata. [`MemoryStore`] is the instrumented in-memory
//! backend; it counts every request and can charge a [`LatencyModel`] to a
//! virtual clock so performance trends are reproducible without real I/O.

mod latency;
mod memory;

use std::collections::BTreeMap;
use std::fmt;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

pub use latency::LatencyModel;
pub use memory::{Fault, FaultOp, MemoryStore, StoreConfig};

/// User-defined metadata attached to an object.
pub type UserMeta = BTreeMap<String, String>;

pub const DEFAULT_MAX_BUCKETS: usize = 100;
pub const DEFAULT_PAGE_SIZE: usize = 1000;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("no such bucket: {0}")]
    UnknownBucket(String),
    #[error("bucket already exists: {0}")]
    BucketExists(String),
    #[error("bucket limit of {0} reached")]
    TooManyBuckets(usize),
    #[error("no such key: {0}")]
    NoSuchKey(ObjectKey),
    #[error("invalid object key: {0}")]
    InvalidKey(String),
    #[error("store capacity exceeded")]
    StoreFull,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("injected fault on {0}")]
    Injected(String),
    #[error("backend error: {0}")]
    Backend(String),
}

/// Bucket plus object name. Names are flat: `/` is an ordinary character.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKey {
    pub bucket: String,
    pub name: String,
}

impl ObjectKey {
    pub fn new(bucket: impl Into<String>, name: impl Into<String>) -> Result<Self, StoreError> {
        let key = ObjectKey { bucket: bucket.into(), name: name.into() };
        if key.bucket.is_empty() {
            return Err(StoreError::InvalidKey("empty bucket".into()));
        }
        if key.name.is_empty() {
            return Err(StoreError::InvalidKey("empty object name".into()));
        }
        Ok(key)
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.bucket, self.name)
    }
}

/// Opaque content hash of an object's full payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ETag(pub String);

impl ETag {
    pub fn of(data: &[u8]) -> Self {
        ETag(format!("{:032x}", xxhash_rust::xxh3::xxh3_128(data)))
    }
}

impl fmt::Display for ETag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRecord {
    pub key: ObjectKey,
    pub data: Bytes,
    pub user_meta: UserMeta,
    pub etag: ETag,
}

/// One entry of a LIST response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectSummary {
    pub name: String,
    pub size: u64,
    pub etag: ETag,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ListPage {
    pub entries: Vec<ObjectSummary>,
    /// Pass as `start_after` to fetch the next page; `None` on the last page.
    pub next_start_after: Option<String>,
}

/// Request and traffic counters since the last reset.
///
/// Virtual time is kept in integer nanoseconds so that closed-form expected
/// durations compare exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub puts: u64,
    pub gets: u64,
    pub dels: u64,
    pub copies: u64,
    pub lists: u64,
    /// User-metadata reads and writes.
    pub meta_ops: u64,
    pub bytes_uploaded: u64,
    pub bytes_downloaded: u64,
    pub virtual_ns: u64,
}

impl OpCounters {
    pub fn virtual_seconds(&self) -> f64 {
        self.virtual_ns as f64 / 1e9
    }

    pub fn total_ops(&self) -> u64 {
        self.puts + self.gets + self.dels + self.copies + self.lists + self.meta_ops
    }

    /// Counter growth from `earlier` to `self`.
    pub fn since(&self, earlier: &OpCounters) -> OpCounters {
        OpCounters {
            puts: self.puts - earlier.puts,
            gets: self.gets - earlier.gets,
            dels: self.dels - earlier.dels,
            copies: self.copies - earlier.copies,
            lists: self.lists - earlier.lists,
            meta_ops: self.meta_ops - earlier.meta_ops,
            bytes_uploaded: self.bytes_uploaded - earlier.bytes_uploaded,
            bytes_downloaded: self.bytes_downloaded - earlier.bytes_downloaded,
            virtual_ns: self.virtual_ns - earlier.virtual_ns,
        }
    }
}

/// The operations every backend must provide.
///
/// Parallel variants (`multipart_*`, `*_parallel`) declare a group of
/// transfers that the backend may overlap; a simulated backend charges the
/// group's makespan rather than the sum of its parts.
pub trait ObjectStore: Send + Sync {
    fn create_bucket(&self, bucket: &str) -> Result<(), StoreError>;

    fn bucket_exists(&self, bucket: &str) -> bool;

    /// Stores `data` at `key`, fully replacing any previous object.
    fn put(&self, key: &ObjectKey, data: Bytes, user_meta: UserMeta) -> Result<ETag, StoreError>;

    fn get(&self, key: &ObjectKey) -> Result<ObjectRecord, StoreError>;

    /// Ranged GET. The range is clamped to the object's length.
    fn get_range(&self, key: &ObjectKey, offset: u64, len: u64) -> Result<Bytes, StoreError>;

    /// Deleting an absent key succeeds.
    fn del(&self, key: &ObjectKey) -> Result<(), StoreError>;

    fn list_page(
        &self,
        bucket: &str,
        prefix: &str,
        start_after: Option<&str>,
    ) -> Result<ListPage, StoreError>;

    /// Server-side copy; user metadata travels with the object.
    fn copy(&self, src: &ObjectKey, dst: &ObjectKey) -> Result<ETag, StoreError>;

    fn multipart_put(
        &self,
        key: &ObjectKey,
        data: Bytes,
        part_size: u64,
        threads: usize,
    ) -> Result<ETag, StoreError>;

    fn multipart_get(&self, key: &ObjectKey, part_size: u64, threads: usize)
        -> Result<Bytes, StoreError>;

    /// Independent whole-object PUTs issued as one parallel group.
    fn put_parallel(
        &self,
        items: Vec<(ObjectKey, Bytes)>,
        threads: usize,
    ) -> Result<Vec<ETag>, StoreError>;

    /// Independent whole-object GETs issued as one parallel group.
    fn get_parallel(&self, keys: &[ObjectKey], threads: usize) -> Result<Vec<Bytes>, StoreError>;

    /// Replaces the entire user-metadata map without touching data.
    fn set_user_meta(&self, key: &ObjectKey, meta: UserMeta) -> Result<(), StoreError>;

    fn get_user_meta(&self, key: &ObjectKey) -> Result<UserMeta, StoreError>;

    fn counters(&self) -> OpCounters;

    fn reset_counters(&self);

    /// Whether `copy` is a real server-side copy. Callers fall back to
    /// GET + PUT when it is not.
    fn supports_copy(&self) -> bool {
        true
    }

    /// All objects under `prefix`, following pagination. Each page is one
    /// LIST request.
    fn list(&self, bucket: &str, prefix: &str) -> Result<Vec<ObjectSummary>, StoreError> {
        let mut out = Vec::new();
        let mut start_after: Option<String> = None;
        loop {
            let page = self.list_page(bucket, prefix, start_after.as_deref())?;
            out.extend(page.entries);
            match page.next_start_after {
                Some(next) => start_after = Some(next),
                None => return Ok(out),
            }
        }
    }
}

/// Number of parts a multipart transfer of `len` bytes is split into. An
/// empty payload still travels as one (empty) part.
pub fn part_count(len: u64, part_size: u64) -> u64 {
    if len == 0 {
        1
    } else {
        len.div_ceil(part_size)
    }
}
