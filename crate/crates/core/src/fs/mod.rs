// SPDX-License-Identifier: Apache-2.0

//! POSIX-style file system over an object store.
//!
//! Namespace and attributes live in the [`MetadataService`]; file bytes live
//! in objects named by the configured [`NamingPolicy`] and laid out by the
//! configured [`MappingDescriptor`]. Objects placed in the bucket by other
//! clients can be adopted as files with [`Filesystem::import_objects`].

mod error;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::cache::{self, Cache, CacheKind, CachePolicy, CacheScope, FileObjects};
use crate::mapping::MappingDescriptor;
use crate::metadata::{
    FileKind, InodeNumber, InodeRecord, MetaTxn, MetadataService, NewNode, Resolved,
};
use crate::naming::{self, NameContext, NamingPolicy, Reverse};
use crate::object_store::{ObjectKey, ObjectStore, UserMeta};

pub use error::FsError;

/// Directory that receives imported objects whose names carry no path.
pub const IMPORT_DIR: &str = "imported";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetadataExport {
    Off,
    /// [`Filesystem::sync_meta_to_objects`] copies attributes into each
    /// file's object user metadata.
    InObjectMeta,
}

#[derive(Debug, Clone)]
pub struct FsConfig {
    /// Layout for newly created files.
    pub mapping: MappingDescriptor,
    pub naming: NamingPolicy,
    pub cache: CachePolicy,
    pub metadata_export: MetadataExport,
    pub bucket: String,
}

impl Default for FsConfig {
    fn default() -> Self {
        FsConfig {
            mapping: MappingDescriptor::one_to_one(),
            naming: NamingPolicy::inode_number(),
            cache: CachePolicy::write_back(),
            metadata_export: MetadataExport::Off,
            bucket: "objfs".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpenFlags {
    pub read: bool,
    pub write: bool,
    /// Cut the file to zero length on open.
    pub truncate: bool,
    /// Create the file if it does not exist.
    pub create: bool,
}

impl OpenFlags {
    pub const RDONLY: OpenFlags = OpenFlags { read: true, write: false, truncate: false, create: false };
    pub const WRONLY: OpenFlags = OpenFlags { read: false, write: true, truncate: false, create: false };
    pub const RDWR: OpenFlags = OpenFlags { read: true, write: true, truncate: false, create: false };

    pub fn with_truncate(self) -> Self {
        OpenFlags { truncate: true, ..self }
    }

    pub fn with_create(self) -> Self {
        OpenFlags { create: true, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FileHandle {
    pub fh: u64,
    pub ino: InodeNumber,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ImportReport {
    /// Paths of files created.
    pub created: Vec<String>,
    /// Objects left alone, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Attribute changes for [`Filesystem::setattr`].
#[derive(Debug, Default, Clone, Copy)]
pub struct SetAttr {
    pub mode: Option<u32>,
    pub uid: Option<u32>,
    pub gid: Option<u32>,
    pub atime: Option<u64>,
    pub mtime: Option<u64>,
}

struct FileMove {
    ino: InodeNumber,
    from: FileObjects,
    to: FileObjects,
    stored_size: u64,
}

pub struct Filesystem {
    store: Arc<dyn ObjectStore>,
    meta: Arc<MetadataService>,
    cache: Arc<Cache>,
    config: FsConfig,
    uid: u32,
    gid: u32,
    handles: Mutex<HashMap<u64, (InodeNumber, OpenFlags)>>,
    open_counts: Mutex<HashMap<InodeNumber, u32>>,
    data_locks: Mutex<HashMap<InodeNumber, Arc<Mutex<()>>>>,
    next_fh: AtomicU64,
    // Serializes namespace changes that also move objects.
    ns: Mutex<()>,
}

impl std::fmt::Debug for Filesystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Filesystem").field("config", &self.config).finish_non_exhaustive()
    }
}

fn join_path(dir: &str, name: &str) -> String {
    if dir == "/" {
        format!("/{name}")
    } else {
        format!("{dir}/{name}")
    }
}

fn parent_of(path: &str) -> &str {
    match path.rfind('/') {
        Some(0) | None => "/",
        Some(i) => &path[..i],
    }
}

impl Filesystem {
    /// Formats empty metadata and creates the bucket (an existing bucket is
    /// adopted as is).
    pub fn mkfs(
        store: Arc<dyn ObjectStore>,
        meta: Arc<MetadataService>,
        config: FsConfig,
    ) -> Result<Self, FsError> {
        if meta.is_formatted() {
            return Err(FsError::AlreadyFormatted);
        }
        if !store.bucket_exists(&config.bucket) {
            store.create_bucket(&config.bucket)?;
        }
        let (uid, gid) = process_ids();
        meta.format(0o755, uid, gid)?;
        Filesystem::mount(store, meta, config)
    }

    /// Attaches to already formatted metadata with a private cache, or the
    /// shared one when the policy asks for `Unified` scope.
    pub fn mount(
        store: Arc<dyn ObjectStore>,
        meta: Arc<MetadataService>,
        config: FsConfig,
    ) -> Result<Self, FsError> {
        let cache = match config.cache.scope {
            CacheScope::Local => Arc::new(Cache::new(config.cache.clone())),
            CacheScope::Unified => unified_cache(&config.cache),
        };
        Filesystem::mount_with_cache(store, meta, config, cache)
    }

    /// Attaches using the given cache instance.
    pub fn mount_with_cache(
        store: Arc<dyn ObjectStore>,
        meta: Arc<MetadataService>,
        config: FsConfig,
        cache: Arc<Cache>,
    ) -> Result<Self, FsError> {
        if !meta.is_formatted() {
            return Err(FsError::NotFormatted);
        }
        if config.naming.kind == naming::NamingKind::UserDefined && config.naming.hook.is_none() {
            return Err(FsError::InvalidArgument("user-defined naming without a hook".into()));
        }
        let (uid, gid) = process_ids();
        Ok(Filesystem {
            store,
            meta,
            cache,
            config,
            uid,
            gid,
            handles: Mutex::new(HashMap::new()),
            open_counts: Mutex::new(HashMap::new()),
            data_locks: Mutex::new(HashMap::new()),
            next_fh: AtomicU64::new(1),
            ns: Mutex::new(()),
        })
    }

    /// A fresh file system on an unthrottled in-memory store.
    pub fn in_memory(config: FsConfig) -> Result<Self, FsError> {
        let store = Arc::new(crate::object_store::MemoryStore::new(Default::default()));
        Filesystem::mkfs(store, Arc::new(MetadataService::in_memory()), config)
    }

    pub fn store(&self) -> &Arc<dyn ObjectStore> {
        &self.store
    }

    pub fn metadata(&self) -> &Arc<MetadataService> {
        &self.meta
    }

    pub fn cache(&self) -> &Arc<Cache> {
        &self.cache
    }

    pub fn config(&self) -> &FsConfig {
        &self.config
    }

    fn objects(&self, rec: &InodeRecord) -> Option<FileObjects> {
        Some(FileObjects {
            bucket: self.config.bucket.clone(),
            base: rec.object_base.clone()?,
            mapping: rec.mapping?,
        })
    }

    fn file_objects(&self, rec: &InodeRecord) -> Result<FileObjects, FsError> {
        self.objects(rec).ok_or_else(|| FsError::Metadata(format!("inode {} has no objects", rec.ino)))
    }

    fn data_lock(&self, ino: InodeNumber) -> Arc<Mutex<()>> {
        self.data_locks.lock().entry(ino).or_default().clone()
    }

    fn is_open(&self, ino: InodeNumber) -> bool {
        self.open_counts.lock().get(&ino).is_some_and(|&n| n > 0)
    }

    /// Bytes of `rec` currently held by the store.
    fn stored_size(&self, rec: &InodeRecord) -> u64 {
        self.cache.stored_size(&self.config.bucket, rec.ino).unwrap_or(rec.size)
    }

    fn name_for(&self, path: &str, ino: InodeNumber, uid: u32) -> Result<String, FsError> {
        let ctx = NameContext { path, ino, uid, parent_path: parent_of(path) };
        Ok(naming::base_name(&self.config.naming, &ctx)?)
    }

    // ---- files ----------------------------------------------------------

    /// Creates a regular file and opens it read-write.
    pub fn create(&self, path: &str, mode: u32) -> Result<FileHandle, FsError> {
        let rec = {
            let _ns = self.ns.lock();
            let rec = self.meta.txn(|t| -> Result<InodeRecord, FsError> {
                let (parent, name) = t.resolve_parent(path)?;
                let node = NewNode::file(mode, self.uid, self.gid, self.config.mapping);
                let mut rec = t.create_node(parent.ino, &name, node)?;
                let full = join_path(&parent.canonical, &name);
                let base = self.name_for(&full, rec.ino, rec.uid)?;
                t.claim_name(&base, rec.ino)?;
                rec.object_base = Some(base);
                t.put_inode(rec.ino, rec.clone())?;
                Ok(rec)
            })?;
            let objects = self.file_objects(&rec)?;
            if let Err(e) = cache::create_objects(self.store.as_ref(), &objects) {
                let _ = self.meta.txn(|t| -> Result<(), FsError> {
                    let (parent, name) = t.resolve_parent(path)?;
                    t.unlink_entry(parent.ino, &name)?;
                    t.remove_inode(rec.ino);
                    t.release_name(&objects.base);
                    Ok(())
                });
                return Err(e.into());
            }
            rec
        };
        self.open_inode(&rec, OpenFlags::RDWR)
    }

    pub fn open(&self, path: &str, flags: OpenFlags) -> Result<FileHandle, FsError> {
        let found = self.meta.read(|t| t.resolve(path, true));
        let ino = match found {
            Ok(r) => r.ino,
            Err(crate::metadata::MetaError::NotFound) if flags.create => {
                let h = self.create(path, 0o644)?;
                if flags == OpenFlags::RDWR.with_create() {
                    return Ok(h);
                }
                let ino = h.ino;
                self.close(h)?;
                ino
            }
            Err(e) => return Err(e.into()),
        };
        let rec = self.meta.get_inode(ino)?;
        match rec.kind {
            FileKind::Dir => return Err(FsError::IsADirectory),
            FileKind::Symlink => return Err(FsError::InvalidArgument("unresolved symlink".into())),
            FileKind::File => {}
        }
        if flags.truncate && flags.write {
            self.truncate_inode(ino, 0)?;
        }
        let rec = self.meta.get_inode(ino)?;
        self.open_inode(&rec, flags)
    }

    fn open_inode(&self, rec: &InodeRecord, flags: OpenFlags) -> Result<FileHandle, FsError> {
        let objects = self.file_objects(rec)?;
        {
            let lock = self.data_lock(rec.ino);
            let _g = lock.lock();
            // Another handle may have grown and flushed the file since
            // `rec` was read.
            let size = self.meta.get_inode(rec.ino)?.size;
            self.cache.open(self.store.as_ref(), rec.ino, &objects, size)?;
        }
        *self.open_counts.lock().entry(rec.ino).or_default() += 1;
        let fh = self.next_fh.fetch_add(1, Ordering::Relaxed);
        self.handles.lock().insert(fh, (rec.ino, flags));
        Ok(FileHandle { fh, ino: rec.ino })
    }

    fn handle(&self, h: FileHandle) -> Result<(InodeNumber, OpenFlags), FsError> {
        self.handles.lock().get(&h.fh).copied().ok_or(FsError::BadHandle)
    }

    /// Releases a handle. The last close of a file writes its buffered data
    /// back; the last close of an unlinked file deletes its objects.
    pub fn close(&self, h: FileHandle) -> Result<(), FsError> {
        let (ino, _) = self.handles.lock().remove(&h.fh).ok_or(FsError::BadHandle)?;
        let last = {
            let mut counts = self.open_counts.lock();
            let n = counts.get_mut(&ino).expect("open count for open handle");
            *n -= 1;
            if *n == 0 {
                counts.remove(&ino);
                true
            } else {
                false
            }
        };
        let lock = self.data_lock(ino);
        let _g = lock.lock();
        let rec = self.meta.get_inode(ino)?;
        let gone = rec.nlink == 0;
        let stored = self.stored_size(&rec);
        let Some(objects) = self.objects(&rec) else {
            // Its objects were taken over by a rename; nothing to keep.
            self.cache.close(self.store.as_ref(), ino, &placeholder(&self.config.bucket), true)?;
            if last && gone {
                self.meta.txn(|t| -> Result<(), FsError> {
                    t.remove_inode(ino);
                    Ok(())
                })?;
            }
            return Ok(());
        };
        self.cache.close(self.store.as_ref(), ino, &objects, gone)?;
        if last && gone && !self.cache.is_cached(&self.config.bucket, ino) {
            self.meta.txn(|t| -> Result<(), FsError> {
                t.remove_inode(ino);
                t.release_name(&objects.base);
                Ok(())
            })?;
            cache::delete_objects(self.store.as_ref(), &objects, stored)?;
        }
        Ok(())
    }

    pub fn read(&self, h: FileHandle, offset: u64, len: u64) -> Result<Vec<u8>, FsError> {
        let (ino, flags) = self.handle(h)?;
        if !flags.read {
            return Err(FsError::WriteOnlyHandle);
        }
        let lock = self.data_lock(ino);
        let _g = lock.lock();
        let rec = self.meta.get_inode(ino)?;
        let objects = self.file_objects(&rec)?;
        Ok(self.cache.read(self.store.as_ref(), ino, &objects, rec.size, offset, len)?)
    }

    pub fn write(&self, h: FileHandle, offset: u64, data: &[u8]) -> Result<usize, FsError> {
        let (ino, flags) = self.handle(h)?;
        if !flags.write {
            return Err(FsError::ReadOnlyHandle);
        }
        if data.is_empty() {
            return Ok(0);
        }
        let lock = self.data_lock(ino);
        let _g = lock.lock();
        let rec = self.meta.get_inode(ino)?;
        let objects = self.file_objects(&rec)?;
        let size = self.cache.write(self.store.as_ref(), ino, &objects, rec.size, offset, data)?;
        self.meta.txn(|t| -> Result<(), FsError> {
            let mut rec = t.get_inode(ino)?;
            rec.size = size;
            rec.mtime = rec.mtime.max(t.now());
            t.put_inode(ino, rec)?;
            Ok(())
        })?;
        Ok(data.len())
    }

    // ---- namespace ------------------------------------------------------

    pub fn mkdir(&self, path: &str, mode: u32) -> Result<(), FsError> {
        self.meta.txn(|t| -> Result<(), FsError> {
            let (parent, name) = t.resolve_parent(path)?;
            t.create_node(parent.ino, &name, NewNode::dir(mode, self.uid, self.gid))?;
            Ok(())
        })
    }

    pub fn rmdir(&self, path: &str) -> Result<(), FsError> {
        let _ns = self.ns.lock();
        self.meta.txn(|t| -> Result<(), FsError> {
            let (parent, name) = t.resolve_parent(path)?;
            let child = t.lookup_entry(parent.ino, &name)?.ok_or(FsError::NotFound)?;
            if !t.get_inode(child)?.is_dir() {
                return Err(FsError::NotADirectory);
            }
            t.unlink_entry(parent.ino, &name)?;
            Ok(())
        })
    }

    pub fn unlink(&self, path: &str) -> Result<(), FsError> {
        let _ns = self.ns.lock();
        let rec = self.meta.txn(|t| -> Result<InodeRecord, FsError> {
            let (parent, name) = t.resolve_parent(path)?;
            let child = t.lookup_entry(parent.ino, &name)?.ok_or(FsError::NotFound)?;
            if t.get_inode(child)?.is_dir() {
                return Err(FsError::IsADirectory);
            }
            Ok(t.unlink_entry(parent.ino, &name)?)
        })?;
        self.reclaim(&rec)
    }

    /// Drops an inode whose last name went away, unless it is still open.
    fn reclaim(&self, rec: &InodeRecord) -> Result<(), FsError> {
        if rec.nlink > 0 || self.is_open(rec.ino) {
            return Ok(());
        }
        let stored = self.stored_size(rec);
        let objects = self.objects(rec);
        self.meta.txn(|t| -> Result<(), FsError> {
            t.remove_inode(rec.ino);
            if let Some(o) = &objects {
                t.release_name(&o.base);
            }
            Ok(())
        })?;
        self.data_locks.lock().remove(&rec.ino);
        if let Some(o) = objects {
            cache::delete_objects(self.store.as_ref(), &o, stored)?;
        }
        Ok(())
    }

    pub fn readdir(&self, path: &str) -> Result<Vec<String>, FsError> {
        let ino = self.meta.lookup(path)?;
        Ok(self.meta.readdir(ino)?)
    }

    /// Attributes of `path`, following a final symlink.
    pub fn stat(&self, path: &str) -> Result<InodeRecord, FsError> {
        let ino = self.meta.lookup(path)?;
        Ok(self.meta.get_inode(ino)?)
    }

    /// Attributes of `path` itself, even if it is a symlink.
    pub fn lstat(&self, path: &str) -> Result<InodeRecord, FsError> {
        let r = self.meta.read(|t| t.resolve(path, false))?;
        Ok(self.meta.get_inode(r.ino)?)
    }

    pub fn setattr(&self, path: &str, attr: SetAttr) -> Result<InodeRecord, FsError> {
        self.meta.txn(|t| -> Result<InodeRecord, FsError> {
            let r = t.resolve(path, true)?;
            let mut rec = t.get_inode(r.ino)?;
            if let Some(m) = attr.mode {
                rec.mode = m & 0o7777;
            }
            if let Some(u) = attr.uid {
                rec.uid = u;
            }
            if let Some(g) = attr.gid {
                rec.gid = g;
            }
            if let Some(a) = attr.atime {
                rec.atime = a;
            }
            if let Some(m) = attr.mtime {
                rec.mtime = m;
            }
            t.put_inode(r.ino, rec)?;
            Ok(t.get_inode(r.ino)?)
        })
    }

    pub fn chmod(&self, path: &str, mode: u32) -> Result<(), FsError> {
        self.setattr(path, SetAttr { mode: Some(mode), ..Default::default() }).map(drop)
    }

    pub fn chown(&self, path: &str, uid: u32, gid: u32) -> Result<(), FsError> {
        self.setattr(path, SetAttr { uid: Some(uid), gid: Some(gid), ..Default::default() })
            .map(drop)
    }

    pub fn utimens(&self, path: &str, atime: u64, mtime: u64) -> Result<(), FsError> {
        self.setattr(path, SetAttr { atime: Some(atime), mtime: Some(mtime), ..Default::default() })
            .map(drop)
    }

    pub fn truncate(&self, path: &str, size: u64) -> Result<(), FsError> {
        let ino = self.meta.lookup(path)?;
        self.truncate_inode(ino, size)
    }

    fn truncate_inode(&self, ino: InodeNumber, size: u64) -> Result<(), FsError> {
        let lock = self.data_lock(ino);
        let _g = lock.lock();
        let rec = self.meta.get_inode(ino)?;
        if rec.is_dir() {
            return Err(FsError::IsADirectory);
        }
        let objects = self.file_objects(&rec)?;
        self.cache.truncate(self.store.as_ref(), ino, &objects, rec.size, size)?;
        self.meta.txn(|t| -> Result<(), FsError> {
            let mut rec = t.get_inode(ino)?;
            rec.size = size;
            rec.mtime = rec.mtime.max(t.now());
            t.put_inode(ino, rec)?;
            Ok(())
        })
    }

    pub fn symlink(&self, target: &str, linkpath: &str) -> Result<(), FsError> {
        if target.is_empty() {
            return Err(FsError::InvalidArgument("empty symlink target".into()));
        }
        self.meta.txn(|t| -> Result<(), FsError> {
            let (parent, name) = t.resolve_parent(linkpath)?;
            t.create_node(parent.ino, &name, NewNode::symlink(target, self.uid, self.gid))?;
            Ok(())
        })
    }

    pub fn readlink(&self, path: &str) -> Result<String, FsError> {
        let rec = self.lstat(path)?;
        rec.symlink_target.ok_or(FsError::InvalidArgument(format!("{path} is not a symlink")))
    }

    /// Adds `newpath` as another name for the file at `existing`.
    pub fn link(&self, existing: &str, newpath: &str) -> Result<(), FsError> {
        if !self.config.naming.kind.supports_hardlinks() {
            return Err(FsError::Unsupported(format!(
                "hard links with {} naming",
                self.config.naming.kind.as_str()
            )));
        }
        let _ns = self.ns.lock();
        self.meta.txn(|t| -> Result<(), FsError> {
            let src = t.resolve(existing, false)?;
            let (parent, name) = t.resolve_parent(newpath)?;
            t.link_entry(parent.ino, &name, src.ino)?;
            Ok(())
        })
    }

    /// POSIX rename. Files whose object name depends on the path have their
    /// objects copied to the new names and the old ones deleted; otherwise
    /// only metadata changes.
    pub fn rename(&self, old: &str, new: &str) -> Result<(), FsError> {
        let _ns = self.ns.lock();
        let (moves, target) = self.meta.read(|t| self.plan_rename(t, old, new))?;
        let store = self.store.as_ref();

        // A replaced file whose object names the moved file is about to take
        // is dropped up front, so its objects can be overwritten.
        let mut doomed: Vec<ObjectKey> = Vec::new();
        if let Some(tg) = target.filter(|r| {
            r.object_base.as_ref().is_some_and(|b| moves.iter().any(|m| &m.to.base == b))
        }) {
            let objects = self.file_objects(&tg)?;
            doomed = objects.keys(self.stored_size(&tg))?;
            let open = self.is_open(tg.ino);
            self.meta.txn(|t| -> Result<(), FsError> {
                let (dp, dname) = t.resolve_parent(new)?;
                let mut rec = t.unlink_entry(dp.ino, &dname)?;
                t.release_name(&objects.base);
                if open {
                    rec.object_base = None;
                    t.put_inode(rec.ino, rec)?;
                } else {
                    t.remove_inode(rec.ino);
                }
                Ok(())
            })?;
        }
        let discard = |keys: &[ObjectKey], keep: &HashSet<ObjectKey>| {
            for k in keys.iter().filter(|k| !keep.contains(k)) {
                let _ = store.del(k);
            }
        };

        let mut copied: Vec<ObjectKey> = Vec::new();
        let mut failure = None;
        'copy: for m in &moves {
            let pairs = m.from.keys(m.stored_size)?.into_iter().zip(m.to.keys(m.stored_size)?);
            for (src, dst) in pairs {
                if let Err(e) = copy_object(store, &src, &dst) {
                    failure = Some(e);
                    break 'copy;
                }
                copied.push(dst);
            }
        }
        let committed = match failure {
            Some(e) => Err(e),
            None => self.meta.txn(|t| -> Result<_, FsError> {
                let (sp, sname) = t.resolve_parent(old)?;
                let (dp, dname) = t.resolve_parent(new)?;
                let out = t.rename_entry(sp.ino, &sname, dp.ino, &dname)?;
                for m in &moves {
                    t.release_name(&m.from.base);
                }
                for m in &moves {
                    t.claim_name(&m.to.base, m.ino)?;
                    let mut rec = t.get_inode(m.ino)?;
                    rec.object_base = Some(m.to.base.clone());
                    t.put_inode(m.ino, rec)?;
                }
                Ok(out)
            }),
        };
        let out = match committed {
            Ok(out) => out,
            Err(e) => {
                discard(&copied, &HashSet::new());
                discard(&doomed, &HashSet::new());
                return Err(e);
            }
        };
        let new_keys: HashSet<ObjectKey> = copied.into_iter().collect();
        discard(&doomed, &new_keys);
        for m in &moves {
            for k in m.from.keys(m.stored_size)? {
                store.del(&k)?;
            }
        }
        if let Some(r) = out.replaced {
            self.reclaim(&r)?;
        }
        Ok(())
    }

    fn plan_rename(
        &self,
        t: &MetaTxn<'_, '_>,
        old: &str,
        new: &str,
    ) -> Result<(Vec<FileMove>, Option<InodeRecord>), FsError> {
        let (sp, sname) = t.resolve_parent(old)?;
        let (dp, dname) = t.resolve_parent(new)?;
        let moved = t.lookup_entry(sp.ino, &sname)?.ok_or(FsError::NotFound)?;
        let target = match t.lookup_entry(dp.ino, &dname)? {
            Some(ino) if ino == moved => return Ok((Vec::new(), None)),
            Some(ino) => Some(ino),
            None => None,
        };
        t.check_rename(moved, dp.ino, target)?;
        let target = target.map(|ino| t.get_inode(ino)).transpose()?;
        let mut old_files = Vec::new();
        collect_files(t, moved, &join_path(&sp.canonical, &sname), &mut old_files)?;
        let mut new_files = Vec::new();
        collect_files(t, moved, &join_path(&dp.canonical, &dname), &mut new_files)?;
        let mut moves = Vec::new();
        for ((ino, old_path), (_, path)) in old_files.into_iter().zip(new_files) {
            let rec = t.get_inode(ino)?;
            let Some(from) = self.objects(&rec) else { continue };
            let to_base = self.name_for(&path, ino, rec.uid)?;
            // Names that do not depend on the path stay put, including
            // those of files adopted from existing objects.
            if to_base == from.base || to_base == self.name_for(&old_path, ino, rec.uid)? {
                continue;
            }
            match t.name_owner(&to_base)? {
                None => {}
                Some(owner)
                    if target.as_ref().is_some_and(|r| {
                        r.ino == owner && r.kind == FileKind::File && r.nlink == 1
                    }) => {}
                Some(_) => return Err(FsError::NameConflict(to_base)),
            }
            let to = FileObjects { base: to_base, ..from.clone() };
            moves.push(FileMove { ino, stored_size: self.stored_size(&rec), from, to });
        }
        Ok((moves, target))
    }

    // ---- dual access ----------------------------------------------------

    /// Object keys holding the file at `path`, in chunk order.
    pub fn object_keys(&self, path: &str) -> Result<Vec<ObjectKey>, FsError> {
        let rec = self.stat(path)?;
        let objects = self.file_objects(&rec)?;
        Ok(objects.keys(self.stored_size(&rec))?)
    }

    /// Adopts objects under `prefix` that no file owns yet.
    pub fn import_objects(&self, prefix: &str) -> Result<ImportReport, FsError> {
        let _ns = self.ns.lock();
        let listing = self.store.list(&self.config.bucket, prefix)?;
        let mut report = ImportReport::default();
        for obj in listing {
            let name = obj.name;
            let owned = self.meta.read(|t| -> Result<bool, FsError> {
                if t.name_owner(&name)?.is_some() {
                    return Ok(true);
                }
                let (base, idx) = naming::split_chunk_suffix(&name);
                Ok(idx.is_some() && t.name_owner(base)?.is_some())
            })?;
            if owned {
                continue;
            }
            let path = match naming::reverse(&self.config.naming, &name) {
                Reverse::Path(p) if naming::split_chunk_suffix(&name).1.is_none() => p,
                _ => format!("/{IMPORT_DIR}/{}", naming::sanitize(&name)),
            };
            let result = self.meta.txn(|t| -> Result<(), FsError> {
                let comps = crate::metadata::components(&path)?;
                let (last, dirs) = comps.split_last().ok_or(FsError::Exists)?;
                let mut dir = InodeNumber::ROOT;
                for c in dirs {
                    dir = match t.lookup_entry(dir, c)? {
                        Some(ino) if t.get_inode(ino)?.is_dir() => ino,
                        Some(_) => return Err(FsError::NotADirectory),
                        None => t.create_node(dir, c, NewNode::dir(0o755, self.uid, self.gid))?.ino,
                    };
                }
                let node = NewNode {
                    size: obj.size,
                    ..NewNode::file(0o644, self.uid, self.gid, MappingDescriptor::one_to_one())
                };
                let mut rec = t.create_node(dir, last, node)?;
                t.claim_name(&name, rec.ino)?;
                rec.object_base = Some(name.clone());
                t.put_inode(rec.ino, rec)?;
                Ok(())
            });
            match result {
                Ok(()) => report.created.push(path),
                Err(e) => report.skipped.push((name, e.to_string())),
            }
        }
        Ok(report)
    }

    /// Copies each file's attributes into its first object's user metadata.
    pub fn sync_meta_to_objects(&self) -> Result<usize, FsError> {
        if self.config.metadata_export != MetadataExport::InObjectMeta {
            return Err(FsError::ExportDisabled);
        }
        let files: Vec<InodeRecord> = self
            .meta
            .read(|t| t.all_inodes())?
            .into_iter()
            .filter(|r| r.kind == FileKind::File && r.nlink > 0)
            .collect();
        for rec in &files {
            let objects = self.file_objects(rec)?;
            let meta: UserMeta = [
                ("mode", rec.mode.to_string()),
                ("uid", rec.uid.to_string()),
                ("gid", rec.gid.to_string()),
                ("mtime", rec.mtime.to_string()),
                ("size", rec.size.to_string()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            self.store.set_user_meta(&objects.key(0)?, meta)?;
        }
        Ok(files.len())
    }

    // ---- conveniences ---------------------------------------------------

    /// Creates or replaces `path` with `data`.
    pub fn write_file(&self, path: &str, data: &[u8]) -> Result<(), FsError> {
        let h = match self.open(path, OpenFlags::WRONLY.with_truncate()) {
            Ok(h) => h,
            Err(FsError::NotFound) => self.create(path, 0o644)?,
            Err(e) => return Err(e),
        };
        let res = self.write(h, 0, data);
        let closed = self.close(h);
        res?;
        closed
    }

    pub fn read_file(&self, path: &str) -> Result<Vec<u8>, FsError> {
        let h = self.open(path, OpenFlags::RDONLY)?;
        let res = self.stat(path).and_then(|rec| self.read(h, 0, rec.size));
        let closed = self.close(h);
        let data = res?;
        closed?;
        Ok(data)
    }

    /// Resolves `path` to its inode and symlink-free spelling.
    pub fn resolve(&self, path: &str) -> Result<Resolved, FsError> {
        Ok(self.meta.read(|t| t.resolve(path, true))?)
    }

    /// Whether the cache holds `path`'s data right now.
    pub fn is_cached(&self, ino: InodeNumber) -> bool {
        self.config.cache.kind == CacheKind::WriteBack
            && self.cache.is_cached(&self.config.bucket, ino)
    }
}

fn placeholder(bucket: &str) -> FileObjects {
    FileObjects {
        bucket: bucket.to_string(),
        base: String::new(),
        mapping: MappingDescriptor::one_to_one(),
    }
}

fn copy_object(store: &dyn ObjectStore, src: &ObjectKey, dst: &ObjectKey) -> Result<(), FsError> {
    if store.supports_copy() {
        store.copy(src, dst)?;
    } else {
        let rec = store.get(src)?;
        store.put(dst, rec.data, rec.user_meta)?;
    }
    Ok(())
}

/// Every regular file at or below `ino`, with the path it will have once
/// `ino` sits at `path`.
fn collect_files(
    t: &MetaTxn<'_, '_>,
    ino: InodeNumber,
    path: &str,
    out: &mut Vec<(InodeNumber, String)>,
) -> Result<(), FsError> {
    let rec = t.get_inode(ino)?;
    match rec.kind {
        FileKind::File => out.push((ino, path.to_string())),
        FileKind::Dir => {
            for (name, child) in t.readdir(ino)? {
                collect_files(t, child, &join_path(path, &name), out)?;
            }
        }
        FileKind::Symlink => {}
    }
    Ok(())
}

fn process_ids() -> (u32, u32) {
    // SAFETY: getuid/getgid cannot fail and touch no memory.
    unsafe { (libc::getuid(), libc::getgid()) }
}

/// Process-wide cache shared by mounts with `Unified` scope. Mounts asking
/// for a different policy get a fresh instance that later ones then share.
fn unified_cache(policy: &CachePolicy) -> Arc<Cache> {
    static SHARED: Mutex<Option<Arc<Cache>>> = Mutex::new(None);
    let mut slot = SHARED.lock();
    match slot.as_ref() {
        Some(c) if c.policy() == policy => c.clone(),
        _ => {
            let c = Arc::new(Cache::new(policy.clone()));
            *slot = Some(c.clone());
            c
        }
    }
}

#[cfg(test)]
mod tests;
