// SPDX-License-Identifier: Apache-2.0

use crate::cache::CacheError;
use crate::metadata::MetaError;
use crate::naming::NamingError;
use crate::object_store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum FsError {
    #[error("no such file or directory")]
    NotFound,
    #[error("file exists")]
    Exists,
    #[error("not a directory")]
    NotADirectory,
    #[error("is a directory")]
    IsADirectory,
    #[error("directory not empty")]
    NotEmpty,
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("object name {0:?} is already in use")]
    NameConflict(String),
    #[error("bad file handle")]
    BadHandle,
    #[error("handle not open for writing")]
    ReadOnlyHandle,
    #[error("handle not open for reading")]
    WriteOnlyHandle,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("too many levels of symbolic links")]
    SymlinkLoop,
    #[error("file system already formatted")]
    AlreadyFormatted,
    #[error("file system not formatted")]
    NotFormatted,
    #[error("metadata export is disabled")]
    ExportDisabled,
    #[error("cache exhausted: need {needed} bytes, {available} available")]
    CacheExhausted { needed: u64, available: u64 },
    #[error("object store: {0}")]
    Store(#[from] StoreError),
    #[error("naming: {0}")]
    Naming(NamingError),
    #[error("metadata: {0}")]
    Metadata(String),
}

impl FsError {
    /// POSIX errno for this error.
    pub fn errno(&self) -> i32 {
        match self {
            FsError::NotFound => libc::ENOENT,
            FsError::Exists | FsError::NameConflict(_) | FsError::AlreadyFormatted => libc::EEXIST,
            FsError::NotADirectory => libc::ENOTDIR,
            FsError::IsADirectory => libc::EISDIR,
            FsError::NotEmpty => libc::ENOTEMPTY,
            FsError::Unsupported(_) | FsError::ExportDisabled => libc::EOPNOTSUPP,
            FsError::BadHandle | FsError::ReadOnlyHandle | FsError::WriteOnlyHandle => libc::EBADF,
            FsError::InvalidArgument(_) | FsError::Naming(_) => libc::EINVAL,
            FsError::SymlinkLoop => libc::ELOOP,
            FsError::NotFormatted => libc::ENODEV,
            FsError::CacheExhausted { .. } => libc::ENOSPC,
            FsError::Store(StoreError::StoreFull) => libc::ENOSPC,
            FsError::Store(StoreError::NoSuchKey(_)) => libc::ENOENT,
            FsError::Store(_) | FsError::Metadata(_) => libc::EIO,
        }
    }
}

impl From<MetaError> for FsError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::NotFound => FsError::NotFound,
            MetaError::Exists => FsError::Exists,
            MetaError::NotADirectory => FsError::NotADirectory,
            MetaError::IsADirectory => FsError::IsADirectory,
            MetaError::NotEmpty => FsError::NotEmpty,
            MetaError::SymlinkLoop => FsError::SymlinkLoop,
            MetaError::InvalidName(n) => FsError::InvalidArgument(format!("invalid name {n:?}")),
            MetaError::InvalidArgument(m) => FsError::InvalidArgument(m),
            MetaError::NameConflict(n) => FsError::NameConflict(n),
            MetaError::AlreadyFormatted => FsError::AlreadyFormatted,
            MetaError::NotFormatted => FsError::NotFormatted,
            other => FsError::Metadata(other.to_string()),
        }
    }
}

impl From<NamingError> for FsError {
    fn from(e: NamingError) -> Self {
        match e {
            NamingError::NameConflict(n) => FsError::NameConflict(n),
            other => FsError::Naming(other),
        }
    }
}

impl From<CacheError> for FsError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::CacheExhausted { needed, available } => {
                FsError::CacheExhausted { needed, available }
            }
            CacheError::Store(s) => FsError::Store(s),
            CacheError::Naming(n) => n.into(),
        }
    }
}
