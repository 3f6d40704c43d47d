// SPDX-License-Identifier: Apache-2.0

//! File-system metadata kept outside the object store.
//!
//! Inodes, directory entries and the object-name registry live in a
//! transactional key-value store:
//!
//! * `i/<ino hex>`           → [`InodeRecord`] (JSON)
//! * `d/<parent hex>/<name>` → child inode number (8 bytes LE)
//! * `r/<object base name>`  → owning inode number
//! * `s/next_ino`, `s/formatted`
//!
//! Nothing in this module ever touches object storage.

mod kv;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::mapping::MappingDescriptor;

pub use kv::{KvError, KvOp, KvStore, Txn};

pub const MAX_SYMLINK_DEPTH: usize = 40;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct InodeNumber(pub u64);

impl InodeNumber {
    pub const ROOT: InodeNumber = InodeNumber(1);
}

impl fmt::Display for InodeNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FileKind {
    File,
    Dir,
    Symlink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InodeRecord {
    pub ino: InodeNumber,
    pub kind: FileKind,
    /// Permission bits only.
    pub mode: u32,
    pub uid: u32,
    pub gid: u32,
    pub size: u64,
    pub nlink: u32,
    pub atime: u64,
    pub mtime: u64,
    pub ctime: u64,
    /// Containing directory; meaningful for directories only.
    pub parent: InodeNumber,
    /// Files only.
    pub mapping: Option<MappingDescriptor>,
    /// Files only: object base name chosen when the file was created.
    pub object_base: Option<String>,
    /// Symlinks only.
    pub symlink_target: Option<String>,
}

impl InodeRecord {
    pub fn is_dir(&self) -> bool {
        self.kind == FileKind::Dir
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MetaError {
    #[error("not found")]
    NotFound,
    #[error("entry exists")]
    Exists,
    #[error("not a directory")]
    NotADirectory,
    #[error("is a directory")]
    IsADirectory,
    #[error("directory not empty")]
    NotEmpty,
    #[error("too many levels of symbolic links")]
    SymlinkLoop,
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inode number mismatch: key {expected}, record {found}")]
    InodeMismatch { expected: InodeNumber, found: InodeNumber },
    #[error("object name {0:?} already owned")]
    NameConflict(String),
    #[error("file system already formatted")]
    AlreadyFormatted,
    #[error("file system not formatted")]
    NotFormatted,
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("corrupt metadata: {0}")]
    Corrupt(String),
}

/// What a new inode starts out as.
#[derive(Debug, Clone)]
pub struct NewNode {
    pub kind: FileKind,
    pub mode: u32,
    pub uid: u32,
    pub gid: u32,
    pub size: u64,
    pub mapping: Option<MappingDescriptor>,
    pub symlink_target: Option<String>,
}

impl NewNode {
    pub fn file(mode: u32, uid: u32, gid: u32, mapping: MappingDescriptor) -> Self {
        NewNode {
            kind: FileKind::File,
            mode,
            uid,
            gid,
            size: 0,
            mapping: Some(mapping),
            symlink_target: None,
        }
    }

    pub fn dir(mode: u32, uid: u32, gid: u32) -> Self {
        NewNode { kind: FileKind::Dir, mode, uid, gid, size: 0, mapping: None, symlink_target: None }
    }

    pub fn symlink(target: &str, uid: u32, gid: u32) -> Self {
        NewNode {
            kind: FileKind::Symlink,
            mode: 0o777,
            uid,
            gid,
            size: target.len() as u64,
            mapping: None,
            symlink_target: Some(target.to_string()),
        }
    }
}

/// A resolved path: the inode plus the path spelled without symlinks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub ino: InodeNumber,
    pub canonical: String,
}

/// Result of [`MetaTxn::rename_entry`].
#[derive(Debug, Clone)]
pub struct RenameOutcome {
    pub moved: InodeNumber,
    /// Inode that lost a name to the rename, after its link count dropped.
    pub replaced: Option<InodeRecord>,
    /// The source and destination already named the same inode.
    pub noop: bool,
}

fn inode_key(ino: InodeNumber) -> Vec<u8> {
    format!("i/{:016x}", ino.0).into_bytes()
}

fn dir_prefix(parent: InodeNumber) -> Vec<u8> {
    format!("d/{:016x}/", parent.0).into_bytes()
}

fn entry_key(parent: InodeNumber, name: &str) -> Vec<u8> {
    let mut k = dir_prefix(parent);
    k.extend_from_slice(name.as_bytes());
    k
}

fn registry_key(base: &str) -> Vec<u8> {
    format!("r/{base}").into_bytes()
}

const NEXT_INO_KEY: &[u8] = b"s/next_ino";
const FORMATTED_KEY: &[u8] = b"s/formatted";

fn decode_ino(v: &[u8]) -> Result<InodeNumber, MetaError> {
    let bytes: [u8; 8] =
        v.try_into().map_err(|_| MetaError::Corrupt("inode number value".into()))?;
    Ok(InodeNumber(u64::from_le_bytes(bytes)))
}

pub fn validate_name(name: &str) -> Result<(), MetaError> {
    if name.is_empty() || name == "." || name == ".." || name.contains('/') || name.contains('\0')
    {
        return Err(MetaError::InvalidName(name.to_string()));
    }
    Ok(())
}

/// Splits an absolute path into its components, dropping empty ones.
pub fn components(path: &str) -> Result<Vec<&str>, MetaError> {
    if !path.starts_with('/') {
        return Err(MetaError::InvalidArgument(format!("path {path:?} is not absolute")));
    }
    Ok(path.split('/').filter(|c| !c.is_empty()).collect())
}

fn join(canonical: &[String]) -> String {
    if canonical.is_empty() {
        "/".to_string()
    } else {
        format!("/{}", canonical.join("/"))
    }
}

/// Typed view over a key-value transaction.
pub struct MetaTxn<'t, 'a> {
    kv: &'t mut Txn<'a>,
    now: u64,
}

impl MetaTxn<'_, '_> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn get_inode(&self, ino: InodeNumber) -> Result<InodeRecord, MetaError> {
        let raw = self.kv.get(&inode_key(ino)).ok_or(MetaError::NotFound)?;
        serde_json::from_slice(&raw).map_err(|e| MetaError::Corrupt(e.to_string()))
    }

    /// Stores `rec` under `ino`, bumping ctime without letting it go
    /// backwards.
    pub fn put_inode(&mut self, ino: InodeNumber, mut rec: InodeRecord) -> Result<(), MetaError> {
        if rec.ino != ino {
            return Err(MetaError::InodeMismatch { expected: ino, found: rec.ino });
        }
        let prev_ctime = self.get_inode(ino).map(|r| r.ctime).unwrap_or(0);
        rec.ctime = rec.ctime.max(self.now).max(prev_ctime);
        self.write_inode(&rec)
    }

    fn write_inode(&mut self, rec: &InodeRecord) -> Result<(), MetaError> {
        let raw = serde_json::to_vec(rec).map_err(|e| MetaError::Corrupt(e.to_string()))?;
        self.kv.put(inode_key(rec.ino), raw);
        Ok(())
    }

    pub fn remove_inode(&mut self, ino: InodeNumber) {
        self.kv.del(inode_key(ino));
    }

    pub fn alloc_ino(&mut self) -> Result<InodeNumber, MetaError> {
        let raw = self.kv.get(NEXT_INO_KEY).ok_or(MetaError::NotFormatted)?;
        let next = decode_ino(&raw)?;
        self.kv.put(NEXT_INO_KEY.to_vec(), (next.0 + 1).to_le_bytes().to_vec());
        Ok(next)
    }

    pub fn lookup_entry(&self, parent: InodeNumber, name: &str) -> Result<Option<InodeNumber>, MetaError> {
        self.kv.get(&entry_key(parent, name)).map(|v| decode_ino(&v)).transpose()
    }

    pub fn readdir(&self, dir: InodeNumber) -> Result<Vec<(String, InodeNumber)>, MetaError> {
        let prefix = dir_prefix(dir);
        self.kv
            .scan_prefix(&prefix)
            .into_iter()
            .map(|(k, v)| {
                let name = String::from_utf8(k[prefix.len()..].to_vec())
                    .map_err(|_| MetaError::Corrupt("entry name".into()))?;
                Ok((name, decode_ino(&v)?))
            })
            .collect()
    }

    fn dir_is_empty(&self, dir: InodeNumber) -> bool {
        !self.kv.has_prefix(&dir_prefix(dir))
    }

    fn require_dir(&self, ino: InodeNumber) -> Result<InodeRecord, MetaError> {
        let rec = self.get_inode(ino)?;
        if !rec.is_dir() {
            return Err(MetaError::NotADirectory);
        }
        Ok(rec)
    }

    fn touch_dir(&mut self, dir: &mut InodeRecord) {
        dir.mtime = dir.mtime.max(self.now);
        dir.ctime = dir.ctime.max(self.now);
    }

    /// Allocates an inode and links it at `(parent, name)` in one step.
    pub fn create_node(
        &mut self,
        parent: InodeNumber,
        name: &str,
        node: NewNode,
    ) -> Result<InodeRecord, MetaError> {
        validate_name(name)?;
        let mut dir = self.require_dir(parent)?;
        if self.lookup_entry(parent, name)?.is_some() {
            return Err(MetaError::Exists);
        }
        let ino = self.alloc_ino()?;
        let is_dir = node.kind == FileKind::Dir;
        let rec = InodeRecord {
            ino,
            kind: node.kind,
            mode: node.mode & 0o7777,
            uid: node.uid,
            gid: node.gid,
            size: node.size,
            nlink: if is_dir { 2 } else { 1 },
            atime: self.now,
            mtime: self.now,
            ctime: self.now,
            parent: if is_dir { parent } else { InodeNumber(0) },
            mapping: node.mapping,
            object_base: None,
            symlink_target: node.symlink_target,
        };
        self.write_inode(&rec)?;
        self.kv.put(entry_key(parent, name), ino.0.to_le_bytes().to_vec());
        if is_dir {
            dir.nlink += 1;
        }
        self.touch_dir(&mut dir);
        self.write_inode(&dir)?;
        Ok(rec)
    }

    /// Adds another name for a non-directory inode.
    pub fn link_entry(
        &mut self,
        parent: InodeNumber,
        name: &str,
        child: InodeNumber,
    ) -> Result<InodeRecord, MetaError> {
        validate_name(name)?;
        let mut dir = self.require_dir(parent)?;
        let mut rec = self.get_inode(child)?;
        if rec.is_dir() {
            return Err(MetaError::IsADirectory);
        }
        if self.lookup_entry(parent, name)?.is_some() {
            return Err(MetaError::Exists);
        }
        self.kv.put(entry_key(parent, name), child.0.to_le_bytes().to_vec());
        rec.nlink += 1;
        rec.ctime = rec.ctime.max(self.now);
        self.write_inode(&rec)?;
        self.touch_dir(&mut dir);
        self.write_inode(&dir)?;
        Ok(rec)
    }

    /// Removes `(parent, name)`. A directory must be empty and its inode is
    /// dropped with the entry; other inodes lose one link and are returned
    /// (possibly at zero links) so the caller can reclaim storage.
    pub fn unlink_entry(&mut self, parent: InodeNumber, name: &str) -> Result<InodeRecord, MetaError> {
        let mut dir = self.require_dir(parent)?;
        let child = self.lookup_entry(parent, name)?.ok_or(MetaError::NotFound)?;
        let mut rec = self.get_inode(child)?;
        if rec.is_dir() {
            if !self.dir_is_empty(child) {
                return Err(MetaError::NotEmpty);
            }
            self.remove_inode(child);
            rec.nlink = 0;
            dir.nlink -= 1;
        } else {
            rec.nlink -= 1;
            rec.ctime = rec.ctime.max(self.now);
            self.write_inode(&rec)?;
        }
        self.kv.del(entry_key(parent, name));
        self.touch_dir(&mut dir);
        self.write_inode(&dir)?;
        Ok(rec)
    }

    fn is_ancestor(&self, candidate: InodeNumber, mut dir: InodeNumber) -> Result<bool, MetaError> {
        loop {
            if dir == candidate {
                return Ok(true);
            }
            if dir == InodeNumber::ROOT {
                return Ok(false);
            }
            dir = self.get_inode(dir)?.parent;
        }
    }

    /// Checks that `moved` may take the place of `target` (if any) inside
    /// `dst_parent`, without changing anything.
    pub fn check_rename(
        &self,
        moved: InodeNumber,
        dst_parent: InodeNumber,
        target: Option<InodeNumber>,
    ) -> Result<(), MetaError> {
        let rec = self.get_inode(moved)?;
        if rec.is_dir() && self.is_ancestor(moved, dst_parent)? {
            return Err(MetaError::InvalidArgument(
                "cannot move a directory inside itself".into(),
            ));
        }
        let Some(t) = target else { return Ok(()) };
        match (rec.is_dir(), self.get_inode(t)?.is_dir()) {
            (true, false) => Err(MetaError::NotADirectory),
            (false, true) => Err(MetaError::IsADirectory),
            (true, true) if !self.readdir(t)?.is_empty() => Err(MetaError::NotEmpty),
            _ => Ok(()),
        }
    }

    /// POSIX rename of `(src_parent, src_name)` to `(dst_parent, dst_name)`.
    pub fn rename_entry(
        &mut self,
        src_parent: InodeNumber,
        src_name: &str,
        dst_parent: InodeNumber,
        dst_name: &str,
    ) -> Result<RenameOutcome, MetaError> {
        self.require_dir(src_parent)?;
        self.require_dir(dst_parent)?;
        let moved = self.lookup_entry(src_parent, src_name)?.ok_or(MetaError::NotFound)?;
        validate_name(dst_name)?;
        let target = self.lookup_entry(dst_parent, dst_name)?;
        if target == Some(moved) {
            return Ok(RenameOutcome { moved, replaced: None, noop: true });
        }
        self.check_rename(moved, dst_parent, target)?;
        let mut rec = self.get_inode(moved)?;
        let replaced = match target {
            Some(_) => Some(self.unlink_entry(dst_parent, dst_name)?),
            None => None,
        };
        self.kv.del(entry_key(src_parent, src_name));
        self.kv.put(entry_key(dst_parent, dst_name), moved.0.to_le_bytes().to_vec());
        if rec.is_dir() && src_parent != dst_parent {
            let mut sp = self.get_inode(src_parent)?;
            sp.nlink -= 1;
            self.write_inode(&sp)?;
            let mut dp = self.get_inode(dst_parent)?;
            dp.nlink += 1;
            self.write_inode(&dp)?;
            rec.parent = dst_parent;
        }
        rec.ctime = rec.ctime.max(self.now);
        self.write_inode(&rec)?;
        for d in [src_parent, dst_parent] {
            let mut dir = self.get_inode(d)?;
            self.touch_dir(&mut dir);
            self.write_inode(&dir)?;
        }
        Ok(RenameOutcome { moved, replaced, noop: false })
    }

    /// Records `ino` as the owner of object base name `base`.
    pub fn claim_name(&mut self, base: &str, ino: InodeNumber) -> Result<(), MetaError> {
        let key = registry_key(base);
        match self.kv.get(&key) {
            Some(v) if decode_ino(&v)? != ino => Err(MetaError::NameConflict(base.to_string())),
            Some(_) => Ok(()),
            None => {
                self.kv.put(key, ino.0.to_le_bytes().to_vec());
                Ok(())
            }
        }
    }

    pub fn release_name(&mut self, base: &str) {
        self.kv.del(registry_key(base));
    }

    pub fn name_owner(&self, base: &str) -> Result<Option<InodeNumber>, MetaError> {
        self.kv.get(&registry_key(base)).map(|v| decode_ino(&v)).transpose()
    }

    /// Walks `path` from the root. Intermediate symlinks are always followed;
    /// the last component only when `follow_final` is set.
    pub fn resolve(&self, path: &str, follow_final: bool) -> Result<Resolved, MetaError> {
        let mut pending: Vec<String> = components(path)?.iter().rev().map(|c| c.to_string()).collect();
        let mut cur = InodeNumber::ROOT;
        let mut canonical: Vec<String> = Vec::new();
        let mut links = 0usize;
        while let Some(comp) = pending.pop() {
            let dir = self.get_inode(cur)?;
            if !dir.is_dir() {
                return Err(MetaError::NotADirectory);
            }
            match comp.as_str() {
                "." => continue,
                ".." => {
                    cur = dir.parent;
                    canonical.pop();
                    continue;
                }
                _ => {}
            }
            let child = self.lookup_entry(cur, &comp)?.ok_or(MetaError::NotFound)?;
            let rec = self.get_inode(child)?;
            let is_last = pending.is_empty();
            if rec.kind == FileKind::Symlink && (!is_last || follow_final) {
                links += 1;
                if links > MAX_SYMLINK_DEPTH {
                    return Err(MetaError::SymlinkLoop);
                }
                let target = rec.symlink_target.clone().unwrap_or_default();
                if target.starts_with('/') {
                    cur = InodeNumber::ROOT;
                    canonical.clear();
                }
                pending.extend(target.split('/').filter(|c| !c.is_empty()).rev().map(str::to_string));
                continue;
            }
            cur = child;
            canonical.push(comp);
        }
        Ok(Resolved { ino: cur, canonical: join(&canonical) })
    }

    /// Resolves the directory that would hold the last component of `path`.
    /// Returns the directory and the final name.
    pub fn resolve_parent(&self, path: &str) -> Result<(Resolved, String), MetaError> {
        let comps = components(path)?;
        let Some((last, init)) = comps.split_last() else {
            return Err(MetaError::InvalidArgument("path has no final component".into()));
        };
        validate_name(last)?;
        let parent_path = format!("/{}", init.join("/"));
        let parent = self.resolve(&parent_path, true)?;
        if !self.get_inode(parent.ino)?.is_dir() {
            return Err(MetaError::NotADirectory);
        }
        Ok((parent, last.to_string()))
    }

    pub fn all_inodes(&self) -> Result<Vec<InodeRecord>, MetaError> {
        self.kv
            .scan_prefix(b"i/")
            .into_iter()
            .map(|(_, v)| serde_json::from_slice(&v).map_err(|e| MetaError::Corrupt(e.to_string())))
            .collect()
    }
}

/// The metadata service: typed operations over a [`KvStore`].
pub struct MetadataService {
    kv: KvStore,
    clock: Arc<dyn Clock>,
}

impl Default for MetadataService {
    fn default() -> Self {
        MetadataService::in_memory()
    }
}

impl MetadataService {
    pub fn in_memory() -> Self {
        MetadataService::with_clock(KvStore::in_memory(), Arc::new(SystemClock))
    }

    pub fn with_clock(kv: KvStore, clock: Arc<dyn Clock>) -> Self {
        MetadataService { kv, clock }
    }

    /// Opens a persistent service backed by snapshot + WAL files in `dir`.
    pub fn open(dir: &Path) -> Result<Self, MetaError> {
        Ok(MetadataService::with_clock(KvStore::open(dir)?, Arc::new(SystemClock)))
    }

    pub fn kv(&self) -> &KvStore {
        &self.kv
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ns()
    }

    /// Runs `f` as one serializable transaction.
    pub fn txn<T, E>(&self, f: impl FnOnce(&mut MetaTxn<'_, '_>) -> Result<T, E>) -> Result<T, E>
    where
        E: From<MetaError>,
    {
        let now = self.clock.now_ns();
        self.kv
            .transaction::<T, TxnError<E>>(|t| {
                let mut mt = MetaTxn { kv: t, now };
                f(&mut mt).map_err(TxnError::Caller)
            })
            .map_err(|e| match e {
                TxnError::Caller(e) => e,
                TxnError::Kv(k) => E::from(MetaError::Kv(k)),
            })
    }

    /// Read-only access.
    pub fn read<T>(&self, f: impl FnOnce(&MetaTxn<'_, '_>) -> T) -> T {
        let now = self.clock.now_ns();
        self.kv.transaction::<T, KvError>(|t| Ok(f(&MetaTxn { kv: t, now }))).expect("read-only")
    }

    pub fn is_formatted(&self) -> bool {
        self.kv.get(FORMATTED_KEY).is_some()
    }

    /// Creates the root directory (inode 1) and starts allocation at 2.
    pub fn format(&self, mode: u32, uid: u32, gid: u32) -> Result<(), MetaError> {
        self.txn(|t| {
            if t.kv.contains(FORMATTED_KEY) {
                return Err(MetaError::AlreadyFormatted);
            }
            let now = t.now;
            let root = InodeRecord {
                ino: InodeNumber::ROOT,
                kind: FileKind::Dir,
                mode: mode & 0o7777,
                uid,
                gid,
                size: 0,
                nlink: 2,
                atime: now,
                mtime: now,
                ctime: now,
                parent: InodeNumber::ROOT,
                mapping: None,
                object_base: None,
                symlink_target: None,
            };
            t.write_inode(&root)?;
            t.kv.put(NEXT_INO_KEY.to_vec(), 2u64.to_le_bytes().to_vec());
            t.kv.put(FORMATTED_KEY.to_vec(), vec![1]);
            Ok(())
        })
    }

    pub fn alloc_ino(&self) -> Result<InodeNumber, MetaError> {
        self.txn(|t| t.alloc_ino())
    }

    pub fn get_inode(&self, ino: InodeNumber) -> Result<InodeRecord, MetaError> {
        self.read(|t| t.get_inode(ino))
    }

    pub fn put_inode(&self, ino: InodeNumber, rec: InodeRecord) -> Result<(), MetaError> {
        self.txn(|t| {
            t.get_inode(ino)?;
            t.put_inode(ino, rec)
        })
    }

    /// Resolves `path`, following symlinks, to an inode number.
    pub fn lookup(&self, path: &str) -> Result<InodeNumber, MetaError> {
        self.read(|t| t.resolve(path, true)).map(|r| r.ino)
    }

    pub fn create_node(
        &self,
        parent: InodeNumber,
        name: &str,
        node: NewNode,
    ) -> Result<InodeRecord, MetaError> {
        self.txn(|t| t.create_node(parent, name, node))
    }

    pub fn link_entry(
        &self,
        parent: InodeNumber,
        name: &str,
        child: InodeNumber,
    ) -> Result<InodeRecord, MetaError> {
        self.txn(|t| t.link_entry(parent, name, child))
    }

    pub fn unlink_entry(&self, parent: InodeNumber, name: &str) -> Result<InodeRecord, MetaError> {
        self.txn(|t| t.unlink_entry(parent, name))
    }

    /// Sorted entry names of directory `ino`.
    pub fn readdir(&self, ino: InodeNumber) -> Result<Vec<String>, MetaError> {
        self.read(|t| {
            t.require_dir(ino)?;
            Ok(t.readdir(ino)?.into_iter().map(|(n, _)| n).collect())
        })
    }

    /// Persists a snapshot and truncates the WAL.
    pub fn snapshot(&self) -> Result<(), MetaError> {
        Ok(self.kv.snapshot()?)
    }

    /// Full-scan consistency check of the namespace.
    ///
    /// Every directory's parent chain reaches the root, every directory entry
    /// points at a live inode, directory link counts equal 2 plus their
    /// subdirectories, and every other inode's link count equals the number
    /// of entries naming it. Unreferenced non-directory inodes are returned:
    /// they are files unlinked while still open.
    pub fn audit(&self) -> Result<Vec<InodeNumber>, String> {
        self.read(|t| {
            let inodes = t.all_inodes().map_err(|e| e.to_string())?;
            let by_ino: std::collections::HashMap<_, _> =
                inodes.iter().map(|r| (r.ino, r.clone())).collect();
            let mut refs: std::collections::HashMap<InodeNumber, u32> = Default::default();
            let mut subdirs: std::collections::HashMap<InodeNumber, u32> = Default::default();
            for rec in inodes.iter().filter(|r| r.is_dir()) {
                for (name, child) in t.readdir(rec.ino).map_err(|e| e.to_string())? {
                    let c = by_ino
                        .get(&child)
                        .ok_or_else(|| format!("entry {name:?} in {} dangles", rec.ino))?;
                    *refs.entry(child).or_default() += 1;
                    if c.is_dir() {
                        *subdirs.entry(rec.ino).or_default() += 1;
                        if c.parent != rec.ino {
                            return Err(format!("dir {} parent mismatch", c.ino));
                        }
                    }
                }
            }
            let mut orphans = Vec::new();
            for rec in &inodes {
                if rec.is_dir() {
                    let expected = 2 + subdirs.get(&rec.ino).copied().unwrap_or(0);
                    if rec.nlink != expected {
                        return Err(format!("dir {} nlink {} != {expected}", rec.ino, rec.nlink));
                    }
                    let mut seen = std::collections::HashSet::new();
                    let mut cur = rec.ino;
                    while cur != InodeNumber::ROOT {
                        if !seen.insert(cur) {
                            return Err(format!("cycle through {cur}"));
                        }
                        let r = by_ino.get(&cur).ok_or_else(|| format!("dir {cur} missing"))?;
                        if refs.get(&cur).copied().unwrap_or(0) != 1 {
                            return Err(format!("dir {cur} not linked exactly once"));
                        }
                        cur = r.parent;
                    }
                } else {
                    let n = refs.get(&rec.ino).copied().unwrap_or(0);
                    if n != rec.nlink {
                        return Err(format!("inode {} nlink {} != refs {n}", rec.ino, rec.nlink));
                    }
                    if n == 0 {
                        orphans.push(rec.ino);
                    }
                }
            }
            Ok(orphans)
        })
    }
}

enum TxnError<E> {
    Caller(E),
    Kv(KvError),
}

impl<E> From<KvError> for TxnError<E> {
    fn from(e: KvError) -> Self {
        TxnError::Kv(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn svc() -> MetadataService {
        let m = MetadataService::in_memory();
        m.format(0o755, 0, 0).unwrap();
        m
    }

    fn mkdir(m: &MetadataService, parent: InodeNumber, name: &str) -> InodeNumber {
        m.create_node(parent, name, NewNode::dir(0o755, 0, 0)).unwrap().ino
    }

    fn mkfile(m: &MetadataService, parent: InodeNumber, name: &str) -> InodeNumber {
        m.create_node(parent, name, NewNode::file(0o644, 0, 0, MappingDescriptor::one_to_one()))
            .unwrap()
            .ino
    }

    #[test]
    fn root_and_first_allocation() {
        let m = svc();
        assert_eq!(m.lookup("/").unwrap(), InodeNumber::ROOT);
        let root = m.get_inode(InodeNumber::ROOT).unwrap();
        assert_eq!((root.kind, root.nlink), (FileKind::Dir, 2));
        assert_eq!(m.alloc_ino().unwrap(), InodeNumber(2));
        assert_eq!(m.format(0o755, 0, 0), Err(MetaError::AlreadyFormatted));
    }

    #[test]
    fn allocation_is_strictly_increasing() {
        let m = svc();
        let mut last = InodeNumber::ROOT;
        for _ in 0..10_000 {
            let next = m.alloc_ino().unwrap();
            assert!(next > last);
            last = next;
        }
    }

    #[test]
    fn concurrent_allocation_is_unique() {
        let m = Arc::new(svc());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let m = Arc::clone(&m);
                std::thread::spawn(move || (0..125).map(|_| m.alloc_ino().unwrap()).collect::<Vec<_>>())
            })
            .collect();
        let all: std::collections::HashSet<_> =
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn allocation_survives_reload() {
        let dir = tempfile::tempdir().unwrap();
        let last = {
            let m = MetadataService::open(dir.path()).unwrap();
            m.format(0o755, 0, 0).unwrap();
            (0..5).map(|_| m.alloc_ino().unwrap()).last().unwrap()
        };
        {
            let m = MetadataService::open(dir.path()).unwrap();
            assert!(m.alloc_ino().unwrap() > last);
            m.snapshot().unwrap();
        }
        let m = MetadataService::open(dir.path()).unwrap();
        assert_eq!(m.alloc_ino().unwrap(), InodeNumber(last.0 + 2));
    }

    #[test]
    fn lookup_nested_and_missing() {
        let m = svc();
        let a = mkdir(&m, InodeNumber::ROOT, "a");
        let b = mkdir(&m, a, "b");
        let c = mkfile(&m, b, "c");
        assert_eq!(m.lookup("/a/b/c").unwrap(), c);
        assert_eq!(m.lookup("/a/x"), Err(MetaError::NotFound));
        assert_eq!(m.lookup("/a/b/c/d"), Err(MetaError::NotADirectory));
        assert_eq!(m.lookup("/a/b/../b/./c").unwrap(), c);
    }

    #[test]
    fn symlinks_resolve_like_their_targets() {
        let m = svc();
        let a = mkdir(&m, InodeNumber::ROOT, "a");
        let b = mkdir(&m, a, "b");
        mkfile(&m, b, "c");
        m.create_node(InodeNumber::ROOT, "s", NewNode::symlink("/a", 0, 0)).unwrap();
        m.create_node(b, "rel", NewNode::symlink("../b/c", 0, 0)).unwrap();
        assert_eq!(m.lookup("/s/b/c").unwrap(), m.lookup("/a/b/c").unwrap());
        assert_eq!(m.lookup("/a/b/rel").unwrap(), m.lookup("/a/b/c").unwrap());
        let r = m.read(|t| t.resolve("/s/b", true)).unwrap();
        assert_eq!(r.canonical, "/a/b");
        // Not following the final component yields the link itself.
        let link = m.read(|t| t.resolve("/s", false)).unwrap();
        assert_eq!(m.get_inode(link.ino).unwrap().kind, FileKind::Symlink);
    }

    #[test]
    fn symlink_loop_is_detected() {
        let m = svc();
        m.create_node(InodeNumber::ROOT, "x", NewNode::symlink("/y", 0, 0)).unwrap();
        m.create_node(InodeNumber::ROOT, "y", NewNode::symlink("/x", 0, 0)).unwrap();
        assert_eq!(m.lookup("/x"), Err(MetaError::SymlinkLoop));
    }

    #[test]
    fn symlink_chain_depth_limit() {
        let m = svc();
        mkfile(&m, InodeNumber::ROOT, "f");
        let mut prev = "/f".to_string();
        for i in 0..MAX_SYMLINK_DEPTH {
            let name = format!("l{i}");
            m.create_node(InodeNumber::ROOT, &name, NewNode::symlink(&prev, 0, 0)).unwrap();
            prev = format!("/{name}");
        }
        assert!(m.lookup(&prev).is_ok());
        m.create_node(InodeNumber::ROOT, "over", NewNode::symlink(&prev, 0, 0)).unwrap();
        assert_eq!(m.lookup("/over"), Err(MetaError::SymlinkLoop));
    }

    #[test]
    fn entries_and_links() {
        let m = svc();
        let f = mkfile(&m, InodeNumber::ROOT, "f");
        assert_eq!(
            m.create_node(InodeNumber::ROOT, "f", NewNode::dir(0o755, 0, 0)),
            Err(MetaError::Exists)
        );
        assert_eq!(m.link_entry(InodeNumber::ROOT, "g", f).unwrap().nlink, 2);
        assert_eq!(m.link_entry(InodeNumber::ROOT, "g", f), Err(MetaError::Exists));
        assert_eq!(m.unlink_entry(InodeNumber::ROOT, "f").unwrap().nlink, 1);
        assert_eq!(m.lookup("/g").unwrap(), f);
        assert_eq!(m.unlink_entry(InodeNumber::ROOT, "g").unwrap().nlink, 0);
        assert_eq!(m.unlink_entry(InodeNumber::ROOT, "g"), Err(MetaError::NotFound));
    }

    #[test]
    fn non_empty_directory_cannot_be_unlinked() {
        let m = svc();
        let d = mkdir(&m, InodeNumber::ROOT, "d");
        mkfile(&m, d, "f");
        assert_eq!(m.unlink_entry(InodeNumber::ROOT, "d"), Err(MetaError::NotEmpty));
        m.unlink_entry(d, "f").unwrap();
        m.unlink_entry(InodeNumber::ROOT, "d").unwrap();
        assert_eq!(m.get_inode(InodeNumber::ROOT).unwrap().nlink, 2);
        assert_eq!(m.get_inode(d), Err(MetaError::NotFound));
    }

    #[test]
    fn readdir_sorted_and_tracks_renames() {
        let m = svc();
        let d = mkdir(&m, InodeNumber::ROOT, "d");
        assert!(m.readdir(d).unwrap().is_empty());
        for n in ["zeta", "alpha", "mid"] {
            mkfile(&m, d, n);
        }
        assert_eq!(m.readdir(d).unwrap(), ["alpha", "mid", "zeta"]);
        m.txn(|t| t.rename_entry(d, "mid", d, "beta")).unwrap();
        assert_eq!(m.readdir(d).unwrap(), ["alpha", "beta", "zeta"]);
    }

    #[test]
    fn dir_nlink_counts_subdirectories() {
        let m = svc();
        let a = mkdir(&m, InodeNumber::ROOT, "a");
        mkdir(&m, a, "x");
        mkdir(&m, a, "y");
        mkfile(&m, a, "f");
        assert_eq!(m.get_inode(a).unwrap().nlink, 4);
        let b = mkdir(&m, InodeNumber::ROOT, "b");
        m.txn(|t| t.rename_entry(a, "x", b, "x")).unwrap();
        assert_eq!(m.get_inode(a).unwrap().nlink, 3);
        assert_eq!(m.get_inode(b).unwrap().nlink, 3);
        assert_eq!(m.audit(), Ok(vec![]));
    }

    #[test]
    fn rename_into_own_subtree_is_rejected() {
        let m = svc();
        let a = mkdir(&m, InodeNumber::ROOT, "a");
        let b = mkdir(&m, a, "b");
        let err = m.txn(|t| t.rename_entry(InodeNumber::ROOT, "a", b, "a")).unwrap_err();
        assert!(matches!(err, MetaError::InvalidArgument(_)));
    }

    #[test]
    fn stat_round_trip_and_mismatch() {
        let m = svc();
        let f = mkfile(&m, InodeNumber::ROOT, "f");
        let mut rec = m.get_inode(f).unwrap();
        rec.mode = 0o600;
        rec.uid = 42;
        rec.size = 99;
        m.put_inode(f, rec.clone()).unwrap();
        let back = m.get_inode(f).unwrap();
        assert_eq!(back, InodeRecord { ctime: back.ctime, ..rec.clone() });
        assert_eq!(
            m.put_inode(InodeNumber(1), rec),
            Err(MetaError::InodeMismatch { expected: InodeNumber(1), found: f })
        );
    }

    #[test]
    fn ctime_never_goes_backwards() {
        let clock = Arc::new(ManualClock::new(1_000));
        let m = MetadataService::with_clock(KvStore::in_memory(), clock.clone());
        m.format(0o755, 0, 0).unwrap();
        let f = mkfile(&m, InodeNumber::ROOT, "f");
        let mut last = m.get_inode(f).unwrap().ctime;
        for t in [5_000u64, 2_000, 9_000, 1, 9_000] {
            clock.set(t);
            let rec = m.get_inode(f).unwrap();
            m.put_inode(f, rec).unwrap();
            let now = m.get_inode(f).unwrap().ctime;
            assert!(now >= last);
            assert!(now >= t);
            last = now;
        }
        assert_eq!(last, 9_000);
    }

    #[test]
    fn name_registry() {
        let m = svc();
        m.txn(|t| t.claim_name("a.txt", InodeNumber(5))).unwrap();
        m.txn(|t| t.claim_name("a.txt", InodeNumber(5))).unwrap();
        assert_eq!(
            m.txn(|t| t.claim_name("a.txt", InodeNumber(6))),
            Err(MetaError::NameConflict("a.txt".into()))
        );
        m.txn::<_, MetaError>(|t| {
            t.release_name("a.txt");
            Ok(())
        })
        .unwrap();
        m.txn(|t| t.claim_name("a.txt", InodeNumber(6))).unwrap();
    }
}
