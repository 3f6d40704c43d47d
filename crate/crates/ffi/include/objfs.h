/* SPDX-License-Identifier: Apache-2.0 */

#ifndef OBJFS_H
#define OBJFS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define OBJFS_OK 0

/**
 * Open for reading.
 */
#define OBJFS_O_READ 1

/**
 * Open for writing.
 */
#define OBJFS_O_WRITE 2

/**
 * Truncate to zero length on open.
 */
#define OBJFS_O_TRUNC 4

/**
 * Create the file if missing.
 */
#define OBJFS_O_CREAT 8

#define OBJFS_KIND_FILE 1

#define OBJFS_KIND_DIR 2

#define OBJFS_KIND_SYMLINK 3

/**
 * Opaque file-system handle.
 */
typedef struct ObjfsFs ObjfsFs;

typedef struct ObjfsStat {
  uint64_t ino;
  /**
   * One of the `OBJFS_KIND_*` values.
   */
  uint32_t kind;
  uint32_t mode;
  uint32_t uid;
  uint32_t gid;
  uint32_t nlink;
  uint64_t size;
  uint64_t atime_ns;
  uint64_t mtime_ns;
  uint64_t ctime_ns;
} ObjfsStat;

typedef struct ObjfsCounters {
  uint64_t puts;
  uint64_t gets;
  uint64_t dels;
  uint64_t copies;
  uint64_t lists;
  uint64_t bytes_uploaded;
  uint64_t bytes_downloaded;
  /**
   * Simulated time in nanoseconds.
   */
  uint64_t virtual_ns;
} ObjfsCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a file system on a fresh in-memory store. `config_text` holds
 * `key = value` lines and may be NULL for defaults.
 *
 * # Safety
 * `config_text` must be NULL or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
int32_t objfs_fs_new(const char *config_text, struct ObjfsFs **out);

/**
 * # Safety
 * `fs` must be NULL or a pointer from [`objfs_fs_new`] not yet freed.
 */
void objfs_fs_free(struct ObjfsFs *fs);

/**
 * Creates a file and opens it read-write.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_create(const struct ObjfsFs *fs, const char *path, uint32_t mode, uint64_t *out_fh);

/**
 * Opens a file with `OBJFS_O_*` flags.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_open(const struct ObjfsFs *fs, const char *path, uint32_t flags, uint64_t *out_fh);

/**
 * # Safety
 * `fs` must be valid.
 */
int32_t objfs_close(const struct ObjfsFs *fs, uint64_t fh);

/**
 * Reads up to `len` bytes at `offset` into `buf`; the count read goes to
 * `out_read`.
 *
 * # Safety
 * `buf` must be writable for `len` bytes.
 */
int32_t objfs_read(const struct ObjfsFs *fs,
                   uint64_t fh,
                   uint64_t offset,
                   uint8_t *buf,
                   size_t len,
                   size_t *out_read);

/**
 * Writes `len` bytes from `buf` at `offset`.
 *
 * # Safety
 * `buf` must be readable for `len` bytes.
 */
int32_t objfs_write(const struct ObjfsFs *fs,
                    uint64_t fh,
                    uint64_t offset,
                    const uint8_t *buf,
                    size_t len);

/**
 * Creates a directory.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_mkdir(const struct ObjfsFs *fs, const char *path, uint32_t mode);

/**
 * Removes a file name.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_unlink(const struct ObjfsFs *fs, const char *path);

/**
 * Removes an empty directory.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_rmdir(const struct ObjfsFs *fs, const char *path);

/**
 * Sets the size of a file.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_truncate(const struct ObjfsFs *fs, const char *path, uint64_t size);

/**
 * Changes permission bits.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_chmod(const struct ObjfsFs *fs, const char *path, uint32_t mode);

/**
 * Renames `from` to `to`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
int32_t objfs_rename(const struct ObjfsFs *fs, const char *from, const char *to);

/**
 * Adds `newpath` as a hard link to `existing`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
int32_t objfs_link(const struct ObjfsFs *fs, const char *existing, const char *newpath);

/**
 * Creates a symlink at `linkpath` pointing to `target`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
int32_t objfs_symlink(const struct ObjfsFs *fs, const char *target, const char *linkpath);

/**
 * Attributes of `path`, following symlinks.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_stat(const struct ObjfsFs *fs, const char *path, struct ObjfsStat *out);

/**
 * Entry names of a directory, one per line. Free the result with
 * [`objfs_string_free`].
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
int32_t objfs_readdir(const struct ObjfsFs *fs, const char *path, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void objfs_string_free(char *s);

/**
 * Adopts objects under `prefix` as files; the number created goes to
 * `out_count`.
 *
 * # Safety
 * Pointers must be valid; `prefix` NUL-terminated.
 */
int32_t objfs_import(const struct ObjfsFs *fs, const char *prefix, uint64_t *out_count);

/**
 * Writes an object straight to the bucket, bypassing the file system.
 *
 * # Safety
 * `data` must be readable for `len` bytes; `name` NUL-terminated.
 */
int32_t objfs_object_put(const struct ObjfsFs *fs,
                         const char *name,
                         const uint8_t *data,
                         size_t len);

/**
 * Reads an object straight from the bucket. Free the buffer with
 * [`objfs_buffer_free`].
 *
 * # Safety
 * Pointers must be valid; `name` NUL-terminated.
 */
int32_t objfs_object_get(const struct ObjfsFs *fs,
                         const char *name,
                         uint8_t **out,
                         size_t *out_len);

/**
 * # Safety
 * `buf`/`len` must come from [`objfs_object_get`].
 */
void objfs_buffer_free(uint8_t *buf, size_t len);

/**
 * Object-store counters since creation or the last reset.
 *
 * # Safety
 * Pointers must be valid.
 */
int32_t objfs_counters(const struct ObjfsFs *fs, struct ObjfsCounters *out);

/**
 * # Safety
 * `fs` must be valid.
 */
int32_t objfs_reset_counters(const struct ObjfsFs *fs);

/**
 * Message for the last failure on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *objfs_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBJFS_H */
