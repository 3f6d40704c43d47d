// SPDX-License-Identifier: Apache-2.0

//! A POSIX-style file system layered on a generic object store.
//!
//! The engine is assembled from independent strategy modules:
//!
//! * [`object_store`]: the PUT/GET/DEL/LIST/COPY interface and an
//!   instrumented in-memory backend with a virtual clock.
//! * [`metadata`]: inode table and namespace kept in a transactional
//!   key-value store, separate from object storage.
//! * [`naming`]: how a file's identity becomes an object name.
//! * [`mapping`]: how a file's bytes are laid out across objects.
//! * [`cache`]: write-back data cache (fetch on open, flush on close).
//! * [`fs`]: the file-system facade plus object import/export.
//! * [`bench`]: workload harness reporting counters and simulated time.

pub mod bench;
pub mod cache;
pub mod clock;
pub mod config;
pub mod fs;
pub mod mapping;
pub mod metadata;
pub mod naming;
pub mod object_store;
pub mod records;

pub use fs::{FileHandle, Filesystem, FsConfig, FsError, OpenFlags};
pub use metadata::{FileKind, InodeNumber, InodeRecord};
pub use object_store::{MemoryStore, ObjectKey, ObjectStore, OpCounters};

pub const MIB: u64 = 1024 * 1024;
