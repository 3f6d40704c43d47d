// SPDX-License-Identifier: Apache-2.0

use super::*;
use crate::mapping::MappingDescriptor;
use crate::object_store::{Fault, FaultOp, MemoryStore, OpCounters, StoreConfig};
use crate::MIB;

fn fs_with(naming: NamingPolicy, mapping: MappingDescriptor, cache: CachePolicy) -> (Filesystem, Arc<MemoryStore>) {
    let store = Arc::new(MemoryStore::new(StoreConfig::default()));
    let config = FsConfig { naming, mapping, cache, ..FsConfig::default() };
    let fs = Filesystem::mkfs(store.clone(), Arc::new(MetadataService::in_memory()), config).unwrap();
    (fs, store)
}

fn inode_fs() -> (Filesystem, Arc<MemoryStore>) {
    fs_with(NamingPolicy::inode_number(), MappingDescriptor::one_to_one(), CachePolicy::write_back())
}

fn names(store: &MemoryStore) -> Vec<String> {
    store.list("objfs", "").unwrap().into_iter().map(|s| s.name).collect()
}

fn delta(store: &MemoryStore, f: impl FnOnce()) -> OpCounters {
    let before = store.counters();
    f();
    store.counters().since(&before)
}

#[test]
fn fresh_root() {
    let (fs, _) = inode_fs();
    assert!(fs.readdir("/").unwrap().is_empty());
    let root = fs.stat("/").unwrap();
    assert_eq!((root.kind, root.nlink), (FileKind::Dir, 2));
}

#[test]
fn second_mkfs_is_rejected() {
    let store = Arc::new(MemoryStore::new(StoreConfig::default()));
    let meta = Arc::new(MetadataService::in_memory());
    Filesystem::mkfs(store.clone(), meta.clone(), FsConfig::default()).unwrap();
    let err = Filesystem::mkfs(store, meta, FsConfig::default()).unwrap_err();
    assert!(matches!(err, FsError::AlreadyFormatted));
}

#[test]
fn first_file_gets_first_inode_name() {
    let (fs, store) = inode_fs();
    let h = fs.create("/a", 0o644).unwrap();
    fs.close(h).unwrap();
    assert_eq!(fs.stat("/a").unwrap().object_base.as_deref(), Some("n/0000000000000002"));
    assert_eq!(names(&store), ["n/0000000000000002"]);
}

#[test]
fn chunked_file_lists_chunk_objects() {
    let (fs, store) =
        fs_with(NamingPolicy::file_path(), MappingDescriptor::one_to_n(4), CachePolicy::write_back());
    fs.mkdir("/d", 0o755).unwrap();
    fs.write_file("/d/f", b"0123456789").unwrap();
    assert_eq!(names(&store), ["d/f.c00000000", "d/f.c00000001", "d/f.c00000002"]);
}

#[test]
fn file_name_collision() {
    let (fs, _) =
        fs_with(NamingPolicy::file_name(), MappingDescriptor::one_to_one(), CachePolicy::none());
    fs.mkdir("/x", 0o755).unwrap();
    fs.mkdir("/y", 0o755).unwrap();
    fs.close(fs.create("/x/f", 0o644).unwrap()).unwrap();
    assert!(matches!(fs.create("/y/f", 0o644), Err(FsError::NameConflict(_))));
    assert!(fs.readdir("/y").unwrap().is_empty());
}

#[test]
fn write_read_round_trip_and_eof() {
    for cache in [CachePolicy::none(), CachePolicy::write_back()] {
        let (fs, _) = fs_with(NamingPolicy::inode_number(), MappingDescriptor::one_to_n(7), cache);
        let h = fs.create("/f", 0o644).unwrap();
        fs.write(h, 0, b"hello world, this spans chunks").unwrap();
        fs.write(h, 6, b"WORLD").unwrap();
        assert_eq!(fs.read(h, 0, 11).unwrap(), b"hello WORLD");
        assert!(fs.read(h, 30, 10).unwrap().is_empty());
        assert_eq!(fs.read(h, 25, 100).unwrap(), b"hunks");
        fs.close(h).unwrap();
        assert_eq!(fs.stat("/f").unwrap().size, 30);
    }
}

#[test]
fn handle_modes_are_enforced() {
    let (fs, _) = inode_fs();
    fs.write_file("/f", b"abc").unwrap();
    let r = fs.open("/f", OpenFlags::RDONLY).unwrap();
    assert!(matches!(fs.write(r, 0, b"x"), Err(FsError::ReadOnlyHandle)));
    fs.close(r).unwrap();
    assert!(matches!(fs.close(r), Err(FsError::BadHandle)));
    let w = fs.open("/f", OpenFlags::WRONLY).unwrap();
    assert!(matches!(fs.read(w, 0, 1), Err(FsError::WriteOnlyHandle)));
    fs.close(w).unwrap();
    fs.mkdir("/d", 0o755).unwrap();
    assert!(matches!(fs.open("/d", OpenFlags::RDONLY), Err(FsError::IsADirectory)));
}

#[test]
fn unlink_chunked_file_deletes_every_chunk() {
    let (fs, store) = fs_with(
        NamingPolicy::inode_number(),
        MappingDescriptor::one_to_n(4 * MIB),
        CachePolicy::write_back(),
    );
    fs.write_file("/f", &vec![7u8; 10 * MIB as usize]).unwrap();
    let d = delta(&store, || fs.unlink("/f").unwrap());
    assert_eq!(d.dels, 3);
    assert!(names(&store).is_empty());
}

#[test]
fn open_unlinked_file_survives_until_last_close() {
    for cache in [CachePolicy::none(), CachePolicy::write_back()] {
        let (fs, store) = fs_with(NamingPolicy::inode_number(), MappingDescriptor::one_to_one(), cache);
        fs.write_file("/f", b"still here").unwrap();
        let h = fs.open("/f", OpenFlags::RDONLY).unwrap();
        fs.unlink("/f").unwrap();
        assert!(matches!(fs.stat("/f"), Err(FsError::NotFound)));
        assert_eq!(names(&store).len(), 1);
        assert_eq!(fs.read(h, 0, 100).unwrap(), b"still here");
        fs.close(h).unwrap();
        assert!(names(&store).is_empty());
        assert_eq!(fs.metadata().audit(), Ok(vec![]));
    }
}

#[test]
fn hard_links_share_bytes_under_inode_naming() {
    let (fs, _) = inode_fs();
    fs.write_file("/a", b"shared").unwrap();
    fs.link("/a", "/b").unwrap();
    assert_eq!(fs.read_file("/b").unwrap(), b"shared");
    assert_eq!(fs.stat("/a").unwrap().nlink, 2);
    fs.unlink("/a").unwrap();
    assert_eq!(fs.read_file("/b").unwrap(), b"shared");
}

#[test]
fn hard_links_unsupported_under_path_naming() {
    for naming in [NamingPolicy::file_path(), NamingPolicy::file_name()] {
        let (fs, _) = fs_with(naming, MappingDescriptor::one_to_one(), CachePolicy::none());
        fs.write_file("/a", b"x").unwrap();
        assert!(matches!(fs.link("/a", "/b"), Err(FsError::Unsupported(_))));
    }
}

#[test]
fn attribute_ops_touch_no_objects() {
    let (fs, store) = inode_fs();
    fs.write_file("/f", b"data").unwrap();
    fs.mkdir("/d", 0o755).unwrap();
    let d = delta(&store, || {
        fs.chmod("/f", 0o600).unwrap();
        fs.chown("/f", 7, 8).unwrap();
        fs.utimens("/f", 1, 2).unwrap();
        fs.readdir("/").unwrap();
        fs.stat("/d").unwrap();
    });
    assert_eq!(d.total_ops(), 0);
    let st = fs.stat("/f").unwrap();
    assert_eq!((st.mode, st.uid, st.gid, st.atime, st.mtime), (0o600, 7, 8, 1, 2));
}

#[test]
fn symlinks() {
    let (fs, _) = inode_fs();
    fs.mkdir("/d", 0o755).unwrap();
    fs.write_file("/d/f", b"via link").unwrap();
    fs.symlink("/d", "/l").unwrap();
    assert_eq!(fs.read_file("/l/f").unwrap(), b"via link");
    assert_eq!(fs.readlink("/l").unwrap(), "/d");
    assert_eq!(fs.lstat("/l").unwrap().kind, FileKind::Symlink);
    assert_eq!(fs.stat("/l").unwrap().kind, FileKind::Dir);
}

#[test]
fn rmdir_rules() {
    let (fs, _) = inode_fs();
    fs.mkdir("/d", 0o755).unwrap();
    fs.write_file("/d/f", b"").unwrap();
    assert!(matches!(fs.rmdir("/d"), Err(FsError::NotEmpty)));
    assert!(matches!(fs.rmdir("/d/f"), Err(FsError::NotADirectory)));
    assert!(matches!(fs.unlink("/d"), Err(FsError::IsADirectory)));
    fs.unlink("/d/f").unwrap();
    fs.rmdir("/d").unwrap();
    assert!(fs.readdir("/").unwrap().is_empty());
}

#[test]
fn truncate_both_ways() {
    for cache in [CachePolicy::none(), CachePolicy::write_back()] {
        for mapping in [MappingDescriptor::one_to_one(), MappingDescriptor::one_to_n(4)] {
            let (fs, store) = fs_with(NamingPolicy::file_path(), mapping, cache.clone());
            fs.write_file("/f", b"0123456789").unwrap();
            fs.truncate("/f", 3).unwrap();
            assert_eq!(fs.read_file("/f").unwrap(), b"012");
            fs.truncate("/f", 6).unwrap();
            assert_eq!(fs.read_file("/f").unwrap(), b"012\0\0\0");
            fs.truncate("/f", 0).unwrap();
            assert!(fs.read_file("/f").unwrap().is_empty());
            // An empty file keeps one zero-length object.
            assert_eq!(names(&store).len(), 1);
        }
    }
}

#[test]
fn inode_rename_is_metadata_only() {
    let (fs, store) = inode_fs();
    fs.mkdir("/d", 0o755).unwrap();
    fs.write_file("/d/f", &vec![1u8; MIB as usize]).unwrap();
    let d = delta(&store, || {
        fs.rename("/d/f", "/g").unwrap();
        fs.rename("/d", "/e").unwrap();
    });
    assert_eq!(d.total_ops(), 0);
    assert_eq!(fs.read_file("/g").unwrap().len() as u64, MIB);
}

#[test]
fn path_rename_moves_every_object_below() {
    let (fs, store) =
        fs_with(NamingPolicy::file_path(), MappingDescriptor::one_to_n(4), CachePolicy::write_back());
    fs.mkdir("/d", 0o755).unwrap();
    fs.mkdir("/d/s", 0o755).unwrap();
    fs.write_file("/d/a", b"12345678").unwrap();
    fs.write_file("/d/s/b", b"xyz").unwrap();
    let d = delta(&store, || fs.rename("/d", "/e").unwrap());
    assert_eq!((d.copies, d.dels, d.puts, d.gets), (3, 3, 0, 0));
    assert_eq!(names(&store), ["e/a.c00000000", "e/a.c00000001", "e/s/b.c00000000"]);
    assert_eq!(fs.read_file("/e/s/b").unwrap(), b"xyz");
    assert_eq!(fs.metadata().audit(), Ok(vec![]));
}

#[test]
fn file_name_rename_moves_only_renamed_file() {
    let (fs, store) =
        fs_with(NamingPolicy::file_name(), MappingDescriptor::one_to_one(), CachePolicy::none());
    fs.mkdir("/d", 0o755).unwrap();
    fs.write_file("/d/a", b"1").unwrap();
    let d = delta(&store, || fs.rename("/d", "/e").unwrap());
    assert_eq!(d.total_ops(), 0);
    let d = delta(&store, || fs.rename("/e/a", "/e/b").unwrap());
    assert_eq!((d.copies, d.dels), (1, 1));
    assert_eq!(names(&store), ["b"]);
}

#[test]
fn path_rename_over_existing_file() {
    let (fs, store) =
        fs_with(NamingPolicy::file_path(), MappingDescriptor::one_to_n(4), CachePolicy::none());
    fs.write_file("/src", b"abcd").unwrap();
    fs.write_file("/dst", b"0123456789").unwrap();
    fs.rename("/src", "/dst").unwrap();
    assert_eq!(fs.read_file("/dst").unwrap(), b"abcd");
    assert_eq!(names(&store), ["dst.c00000000"]);
    assert_eq!(fs.readdir("/").unwrap(), ["dst"]);
    assert_eq!(fs.metadata().audit(), Ok(vec![]));
}

#[test]
fn failed_copy_rolls_back() {
    let (fs, store) =
        fs_with(NamingPolicy::file_path(), MappingDescriptor::one_to_one(), CachePolicy::none());
    fs.mkdir("/d", 0o755).unwrap();
    for i in 0..4 {
        fs.write_file(&format!("/d/f{i}"), b"x").unwrap();
    }
    store.inject_fault(Fault::nth(FaultOp::Copy, 2));
    assert!(fs.rename("/d", "/e").is_err());
    assert_eq!(fs.readdir("/").unwrap(), ["d"]);
    assert_eq!(names(&store), ["d/f0", "d/f1", "d/f2", "d/f3"]);
    store.clear_faults();
    fs.rename("/d", "/e").unwrap();
    assert_eq!(names(&store), ["e/f0", "e/f1", "e/f2", "e/f3"]);
}

#[test]
fn rename_into_descendant_fails_cleanly() {
    let (fs, store) =
        fs_with(NamingPolicy::file_path(), MappingDescriptor::one_to_one(), CachePolicy::none());
    fs.mkdir("/a", 0o755).unwrap();
    fs.mkdir("/a/b", 0o755).unwrap();
    fs.write_file("/a/f", b"x").unwrap();
    assert!(matches!(fs.rename("/a", "/a/b/c"), Err(FsError::InvalidArgument(_))));
    assert_eq!(names(&store), ["a/f"]);
}

#[test]
fn import_under_path_naming() {
    let (fs, store) =
        fs_with(NamingPolicy::file_path(), MappingDescriptor::one_to_one(), CachePolicy::write_back());
    let key = ObjectKey::new("objfs", "docs/a.txt").unwrap();
    store.put(&key, bytes::Bytes::from_static(b"external"), UserMeta::new()).unwrap();
    let report = fs.import_objects("").unwrap();
    assert_eq!(report.created, ["/docs/a.txt"]);
    assert_eq!(fs.read_file("/docs/a.txt").unwrap(), b"external");
    assert_eq!(fs.stat("/docs/a.txt").unwrap().mode, 0o644);
    assert!(fs.import_objects("").unwrap().created.is_empty());
}

#[test]
fn import_under_inode_naming_uses_synthetic_dir() {
    let (fs, store) = inode_fs();
    fs.write_file("/mine", b"owned").unwrap();
    let key = ObjectKey::new("objfs", "raw/.data").unwrap();
    store.put(&key, bytes::Bytes::from_static(b"x"), UserMeta::new()).unwrap();
    let report = fs.import_objects("").unwrap();
    assert_eq!(report.created, ["/imported/raw%2F.data"]);
    assert_eq!(fs.read_file("/imported/raw%2F.data").unwrap(), b"x");
    assert_eq!(naming::unsanitize("raw%2F.data").as_deref(), Some("raw/.data"));
}

#[test]
fn import_skips_path_collisions() {
    let (fs, store) =
        fs_with(NamingPolicy::file_name(), MappingDescriptor::one_to_one(), CachePolicy::none());
    fs.mkdir("/d", 0o755).unwrap();
    fs.write_file("/d/x", b"mine").unwrap();
    store.put(&ObjectKey::new("objfs", "d/x").unwrap(), bytes::Bytes::new(), UserMeta::new()).unwrap();
    let report = fs.import_objects("").unwrap();
    assert!(report.created.is_empty());
    assert_eq!(report.skipped.len(), 1);
}

#[test]
fn sync_meta_export() {
    let (fs, store) = inode_fs();
    fs.write_file("/f", b"abc").unwrap();
    assert!(matches!(fs.sync_meta_to_objects(), Err(FsError::ExportDisabled)));
    let config = FsConfig { metadata_export: MetadataExport::InObjectMeta, ..fs.config().clone() };
    let fs2 = Filesystem::mount(fs.store().clone(), fs.metadata().clone(), config).unwrap();
    let key = fs2.object_keys("/f").unwrap().remove(0);
    let etag = store.get(&key).unwrap().etag;
    fs2.chmod("/f", 0o640).unwrap();
    assert_eq!(fs2.sync_meta_to_objects().unwrap(), 1);
    let meta = store.get_user_meta(&key).unwrap();
    assert_eq!(meta["mode"], (0o640).to_string());
    assert_eq!(meta["size"], "3");
    assert_eq!(store.get(&key).unwrap().etag, etag);
}

#[test]
fn shared_cache_mounts_see_each_others_writes() {
    let store: Arc<dyn ObjectStore> = Arc::new(MemoryStore::new(StoreConfig::default()));
    let meta = Arc::new(MetadataService::in_memory());
    let config = FsConfig { bucket: "shared".into(), ..FsConfig::default() };
    let a = Filesystem::mkfs(store.clone(), meta.clone(), config.clone()).unwrap();
    let cache = a.cache().clone();
    let b = Filesystem::mount_with_cache(store.clone(), meta, config, cache).unwrap();
    let ha = a.create("/f", 0o644).unwrap();
    a.write(ha, 0, b"fresh").unwrap();
    let hb = b.open("/f", OpenFlags::RDONLY).unwrap();
    assert_eq!(b.read(hb, 0, 5).unwrap(), b"fresh");
    b.close(hb).unwrap();
    a.close(ha).unwrap();
}

#[test]
fn write_back_stale_until_close() {
    let (fs, store) = inode_fs();
    fs.write_file("/f", b"old").unwrap();
    let h = fs.open("/f", OpenFlags::RDWR).unwrap();
    fs.write(h, 0, b"new").unwrap();
    let key = fs.object_keys("/f").unwrap().remove(0);
    assert_eq!(&store.get(&key).unwrap().data[..], b"old");
    fs.close(h).unwrap();
    assert_eq!(&store.get(&key).unwrap().data[..], b"new");
}

#[test]
fn errno_mapping() {
    assert_eq!(FsError::NotFound.errno(), libc::ENOENT);
    assert_eq!(FsError::NotEmpty.errno(), libc::ENOTEMPTY);
    assert_eq!(FsError::Unsupported(String::new()).errno(), libc::EOPNOTSUPP);
    assert_eq!(FsError::Exists.errno(), libc::EEXIST);
    assert_eq!(FsError::NotADirectory.errno(), libc::ENOTDIR);
}
