// SPDX-License-Identifier: Apache-2.0

//! C ABI for objfs.
//!
//! Every function returns `0` on success or a negative errno. The message of
//! the most recent failure on the calling thread is available from
//! [`objfs_last_error_message`]. A file system is an opaque [`ObjfsFs`]
//! created by [`objfs_fs_new`] and released by [`objfs_fs_free`].

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::{Arc, Mutex};

use objfs::config::Config;
use objfs::metadata::MetadataService;
use objfs::object_store::{MemoryStore, ObjectKey, UserMeta};
use objfs::{FileHandle, FileKind, Filesystem, FsError, OpenFlags};

pub const OBJFS_OK: i32 = 0;

/// Open for reading.
pub const OBJFS_O_READ: u32 = 1;
/// Open for writing.
pub const OBJFS_O_WRITE: u32 = 2;
/// Truncate to zero length on open.
pub const OBJFS_O_TRUNC: u32 = 4;
/// Create the file if missing.
pub const OBJFS_O_CREAT: u32 = 8;

pub const OBJFS_KIND_FILE: u32 = 1;
pub const OBJFS_KIND_DIR: u32 = 2;
pub const OBJFS_KIND_SYMLINK: u32 = 3;

/// Opaque file-system handle.
pub struct ObjfsFs {
    fs: Filesystem,
    store: Arc<MemoryStore>,
    handles: Mutex<HashMap<u64, FileHandle>>,
}

#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct ObjfsStat {
    pub ino: u64,
    /// One of the `OBJFS_KIND_*` values.
    pub kind: u32,
    pub mode: u32,
    pub uid: u32,
    pub gid: u32,
    pub nlink: u32,
    pub size: u64,
    pub atime_ns: u64,
    pub mtime_ns: u64,
    pub ctime_ns: u64,
}

#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct ObjfsCounters {
    pub puts: u64,
    pub gets: u64,
    pub dels: u64,
    pub copies: u64,
    pub lists: u64,
    pub bytes_uploaded: u64,
    pub bytes_downloaded: u64,
    /// Simulated time in nanoseconds.
    pub virtual_ns: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: FsError) -> i32 {
    set_error(e.to_string());
    -e.errno()
}

fn invalid(msg: &str) -> i32 {
    set_error(msg);
    -libc::EINVAL
}

/// Runs `f`, converting panics to `-EIO`.
fn guard(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(rc) => rc,
        Err(_) => {
            set_error("internal panic");
            -libc::EIO
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(invalid("null string argument"));
    }
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| invalid("string is not UTF-8"))
}

unsafe fn fs_ref<'a>(fs: *const ObjfsFs) -> Result<&'a ObjfsFs, i32> {
    // SAFETY: a non-null pointer came from objfs_fs_new and is not yet freed.
    unsafe { fs.as_ref() }.ok_or_else(|| invalid("null file system"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(rc) => return rc,
        }
    };
}

macro_rules! fs_try {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return fail(e.into()),
        }
    };
}

/// Creates a file system on a fresh in-memory store. `config_text` holds
/// `key = value` lines and may be NULL for defaults.
///
/// # Safety
/// `config_text` must be NULL or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn objfs_fs_new(config_text: *const c_char, out: *mut *mut ObjfsFs) -> i32 {
    guard(|| {
        if out.is_null() {
            return invalid("null out pointer");
        }
        let text = if config_text.is_null() { "" } else { tri!(unsafe { cstr(config_text) }) };
        let config = match Config::parse(text) {
            Ok(c) => c,
            Err(e) => return invalid(&e.to_string()),
        };
        let store = Arc::new(MemoryStore::new(config.store.clone()));
        let meta = Arc::new(MetadataService::in_memory());
        let fs = fs_try!(Filesystem::mkfs(store.clone(), meta, config.fs));
        let boxed = Box::new(ObjfsFs { fs, store, handles: Mutex::new(HashMap::new()) });
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(boxed) };
        OBJFS_OK
    })
}

/// # Safety
/// `fs` must be NULL or a pointer from [`objfs_fs_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn objfs_fs_free(fs: *mut ObjfsFs) {
    if !fs.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(fs) });
    }
}

fn register(fs: &ObjfsFs, h: FileHandle, out: *mut u64) -> i32 {
    fs.handles.lock().expect("handle table").insert(h.fh, h);
    // SAFETY: callers check `out` for null first.
    unsafe { *out = h.fh };
    OBJFS_OK
}

fn lookup(fs: &ObjfsFs, fh: u64) -> Result<FileHandle, i32> {
    fs.handles.lock().expect("handle table").get(&fh).copied().ok_or_else(|| fail(FsError::BadHandle))
}

/// Creates a file and opens it read-write.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_create(
    fs: *const ObjfsFs,
    path: *const c_char,
    mode: u32,
    out_fh: *mut u64,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let path = tri!(unsafe { cstr(path) });
        if out_fh.is_null() {
            return invalid("null out pointer");
        }
        let h = fs_try!(fs.fs.create(path, mode));
        register(fs, h, out_fh)
    })
}

/// Opens a file with `OBJFS_O_*` flags.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_open(
    fs: *const ObjfsFs,
    path: *const c_char,
    flags: u32,
    out_fh: *mut u64,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let path = tri!(unsafe { cstr(path) });
        if out_fh.is_null() {
            return invalid("null out pointer");
        }
        let flags = OpenFlags {
            read: flags & OBJFS_O_READ != 0,
            write: flags & OBJFS_O_WRITE != 0,
            truncate: flags & OBJFS_O_TRUNC != 0,
            create: flags & OBJFS_O_CREAT != 0,
        };
        let h = fs_try!(fs.fs.open(path, flags));
        register(fs, h, out_fh)
    })
}

/// # Safety
/// `fs` must be valid.
#[no_mangle]
pub unsafe extern "C" fn objfs_close(fs: *const ObjfsFs, fh: u64) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let h = tri!(lookup(fs, fh));
        fs.handles.lock().expect("handle table").remove(&fh);
        fs_try!(fs.fs.close(h));
        OBJFS_OK
    })
}

/// Reads up to `len` bytes at `offset` into `buf`; the count read goes to
/// `out_read`.
///
/// # Safety
/// `buf` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn objfs_read(
    fs: *const ObjfsFs,
    fh: u64,
    offset: u64,
    buf: *mut u8,
    len: usize,
    out_read: *mut usize,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        if (buf.is_null() && len > 0) || out_read.is_null() {
            return invalid("null buffer");
        }
        let h = tri!(lookup(fs, fh));
        let data = fs_try!(fs.fs.read(h, offset, len as u64));
        // SAFETY: `data.len() <= len` and `buf` is writable for `len` bytes.
        unsafe {
            ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
            *out_read = data.len();
        }
        OBJFS_OK
    })
}

/// Writes `len` bytes from `buf` at `offset`.
///
/// # Safety
/// `buf` must be readable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn objfs_write(
    fs: *const ObjfsFs,
    fh: u64,
    offset: u64,
    buf: *const u8,
    len: usize,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        if buf.is_null() && len > 0 {
            return invalid("null buffer");
        }
        let h = tri!(lookup(fs, fh));
        let data = if len == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(buf, len) } };
        fs_try!(fs.fs.write(h, offset, data));
        OBJFS_OK
    })
}

fn with_path(fs: *const ObjfsFs, path: *const c_char, f: impl FnOnce(&Filesystem, &str) -> Result<(), FsError>) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let path = tri!(unsafe { cstr(path) });
        fs_try!(f(&fs.fs, path));
        OBJFS_OK
    })
}

fn with_paths(
    fs: *const ObjfsFs,
    a: *const c_char,
    b: *const c_char,
    f: impl FnOnce(&Filesystem, &str, &str) -> Result<(), FsError>,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let a = tri!(unsafe { cstr(a) });
        let b = tri!(unsafe { cstr(b) });
        fs_try!(f(&fs.fs, a, b));
        OBJFS_OK
    })
}

/// Creates a directory.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_mkdir(fs: *const ObjfsFs, path: *const c_char, mode: u32) -> i32 {
    with_path(fs, path, |fs, p| fs.mkdir(p, mode))
}

/// Removes a file name.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_unlink(fs: *const ObjfsFs, path: *const c_char) -> i32 {
    with_path(fs, path, |fs, p| fs.unlink(p))
}

/// Removes an empty directory.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_rmdir(fs: *const ObjfsFs, path: *const c_char) -> i32 {
    with_path(fs, path, |fs, p| fs.rmdir(p))
}

/// Sets the size of a file.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_truncate(fs: *const ObjfsFs, path: *const c_char, size: u64) -> i32 {
    with_path(fs, path, |fs, p| fs.truncate(p, size))
}

/// Changes permission bits.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_chmod(fs: *const ObjfsFs, path: *const c_char, mode: u32) -> i32 {
    with_path(fs, path, |fs, p| fs.chmod(p, mode))
}

/// Renames `from` to `to`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_rename(fs: *const ObjfsFs, from: *const c_char, to: *const c_char) -> i32 {
    with_paths(fs, from, to, |fs, a, b| fs.rename(a, b))
}

/// Adds `newpath` as a hard link to `existing`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_link(
    fs: *const ObjfsFs,
    existing: *const c_char,
    newpath: *const c_char,
) -> i32 {
    with_paths(fs, existing, newpath, |fs, a, b| fs.link(a, b))
}

/// Creates a symlink at `linkpath` pointing to `target`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_symlink(
    fs: *const ObjfsFs,
    target: *const c_char,
    linkpath: *const c_char,
) -> i32 {
    with_paths(fs, target, linkpath, |fs, a, b| fs.symlink(a, b))
}

/// Attributes of `path`, following symlinks.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_stat(
    fs: *const ObjfsFs,
    path: *const c_char,
    out: *mut ObjfsStat,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let path = tri!(unsafe { cstr(path) });
        if out.is_null() {
            return invalid("null out pointer");
        }
        let r = fs_try!(fs.fs.stat(path));
        let st = ObjfsStat {
            ino: r.ino.0,
            kind: match r.kind {
                FileKind::File => OBJFS_KIND_FILE,
                FileKind::Dir => OBJFS_KIND_DIR,
                FileKind::Symlink => OBJFS_KIND_SYMLINK,
            },
            mode: r.mode,
            uid: r.uid,
            gid: r.gid,
            nlink: r.nlink,
            size: r.size,
            atime_ns: r.atime,
            mtime_ns: r.mtime,
            ctime_ns: r.ctime,
        };
        // SAFETY: checked non-null.
        unsafe { *out = st };
        OBJFS_OK
    })
}

fn give_string(s: String, out: *mut *mut c_char) -> i32 {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` for null first.
            unsafe { *out = c.into_raw() };
            OBJFS_OK
        }
        Err(_) => invalid("name contains a NUL byte"),
    }
}

/// Entry names of a directory, one per line. Free the result with
/// [`objfs_string_free`].
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_readdir(
    fs: *const ObjfsFs,
    path: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let path = tri!(unsafe { cstr(path) });
        if out.is_null() {
            return invalid("null out pointer");
        }
        let names = fs_try!(fs.fs.readdir(path));
        give_string(names.join("\n"), out)
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn objfs_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Adopts objects under `prefix` as files; the number created goes to
/// `out_count`.
///
/// # Safety
/// Pointers must be valid; `prefix` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_import(
    fs: *const ObjfsFs,
    prefix: *const c_char,
    out_count: *mut u64,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let prefix = tri!(unsafe { cstr(prefix) });
        let report = fs_try!(fs.fs.import_objects(prefix));
        if !out_count.is_null() {
            // SAFETY: checked non-null.
            unsafe { *out_count = report.created.len() as u64 };
        }
        OBJFS_OK
    })
}

/// Writes an object straight to the bucket, bypassing the file system.
///
/// # Safety
/// `data` must be readable for `len` bytes; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_object_put(
    fs: *const ObjfsFs,
    name: *const c_char,
    data: *const u8,
    len: usize,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let name = tri!(unsafe { cstr(name) });
        if data.is_null() && len > 0 {
            return invalid("null buffer");
        }
        let bytes = if len == 0 { Vec::new() } else { unsafe { std::slice::from_raw_parts(data, len) }.to_vec() };
        let key = fs_try!(ObjectKey::new(fs.fs.config().bucket.clone(), name));
        fs_try!(fs.fs.store().put(&key, bytes.into(), UserMeta::new()));
        OBJFS_OK
    })
}

/// Reads an object straight from the bucket. Free the buffer with
/// [`objfs_buffer_free`].
///
/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn objfs_object_get(
    fs: *const ObjfsFs,
    name: *const c_char,
    out: *mut *mut u8,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        let name = tri!(unsafe { cstr(name) });
        if out.is_null() || out_len.is_null() {
            return invalid("null out pointer");
        }
        let key = fs_try!(ObjectKey::new(fs.fs.config().bucket.clone(), name));
        let rec = fs_try!(fs.fs.store().get(&key));
        let boxed: Box<[u8]> = rec.data.to_vec().into_boxed_slice();
        // SAFETY: checked non-null.
        unsafe {
            *out_len = boxed.len();
            *out = Box::into_raw(boxed) as *mut u8;
        }
        OBJFS_OK
    })
}

/// # Safety
/// `buf`/`len` must come from [`objfs_object_get`].
#[no_mangle]
pub unsafe extern "C" fn objfs_buffer_free(buf: *mut u8, len: usize) {
    if !buf.is_null() {
        // SAFETY: reconstructs the boxed slice handed out earlier.
        drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(buf, len)) });
    }
}

/// Object-store counters since creation or the last reset.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn objfs_counters(fs: *const ObjfsFs, out: *mut ObjfsCounters) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        if out.is_null() {
            return invalid("null out pointer");
        }
        let c = objfs::ObjectStore::counters(fs.store.as_ref());
        let v = ObjfsCounters {
            puts: c.puts,
            gets: c.gets,
            dels: c.dels,
            copies: c.copies,
            lists: c.lists,
            bytes_uploaded: c.bytes_uploaded,
            bytes_downloaded: c.bytes_downloaded,
            virtual_ns: c.virtual_ns,
        };
        // SAFETY: checked non-null.
        unsafe { *out = v };
        OBJFS_OK
    })
}

/// # Safety
/// `fs` must be valid.
#[no_mangle]
pub unsafe extern "C" fn objfs_reset_counters(fs: *const ObjfsFs) -> i32 {
    guard(|| {
        let fs = tri!(unsafe { fs_ref(fs) });
        objfs::ObjectStore::reset_counters(fs.store.as_ref());
        OBJFS_OK
    })
}

/// Message for the last failure on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn objfs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
