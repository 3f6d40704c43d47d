// SPDX-License-Identifier: Apache-2.0

//! Object naming policies.
//!
//! A policy turns a file's identity into the base name of its object(s) and,
//! where the policy allows it, turns an object name back into a file path so
//! objects written through the object interface can show up as files.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mapping::MappingScheme;
use crate::metadata::InodeNumber;

/// Width of the zero-padded chunk index suffix, so LIST order is chunk order.
const CHUNK_DIGITS: usize = 8;
const CHUNK_MARKER: &str = ".c";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum NamingError {
    #[error("object name {0:?} is already owned by another file")]
    NameConflict(String),
    #[error("naming hook failed: {0}")]
    HookFailure(String),
    #[error("chunk index {0} is invalid for this mapping")]
    BadChunkIndex(u64),
    #[error("path {0:?} cannot be named")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NamingKind {
    FileName,
    FilePath,
    InodeNumber,
    UserDefined,
}

impl NamingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NamingKind::FileName => "filename",
            NamingKind::FilePath => "filepath",
            NamingKind::InodeNumber => "inode",
            NamingKind::UserDefined => "user",
        }
    }

    /// Whether a file may have several names pointing at one set of objects.
    pub fn supports_hardlinks(&self) -> bool {
        matches!(self, NamingKind::InodeNumber | NamingKind::UserDefined)
    }
}

/// What a user-defined hook gets to look at when naming a new file.
#[derive(Debug, Clone, Copy)]
pub struct NameContext<'a> {
    pub path: &'a str,
    pub ino: InodeNumber,
    pub uid: u32,
    pub parent_path: &'a str,
}

/// A user-supplied naming scheme. Names are derived once, at file creation,
/// and recorded in the inode.
pub trait NamingHook: Send + Sync {
    fn id(&self) -> &str;

    fn base_name(&self, ctx: &NameContext<'_>) -> Result<String, String>;

    /// File path for an object created outside the file system, if the
    /// scheme can tell.
    fn reverse(&self, _base: &str) -> Option<String> {
        None
    }
}

#[derive(Clone)]
pub struct NamingPolicy {
    pub kind: NamingKind,
    pub hook: Option<Arc<dyn NamingHook>>,
}

impl fmt::Debug for NamingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamingPolicy")
            .field("kind", &self.kind)
            .field("hook", &self.hook.as_ref().map(|h| h.id().to_string()))
            .finish()
    }
}

impl NamingPolicy {
    pub fn new(kind: NamingKind) -> Self {
        NamingPolicy { kind, hook: None }
    }

    pub fn user_defined(hook: Arc<dyn NamingHook>) -> Self {
        NamingPolicy { kind: NamingKind::UserDefined, hook: Some(hook) }
    }

    pub fn file_name() -> Self {
        Self::new(NamingKind::FileName)
    }

    pub fn file_path() -> Self {
        Self::new(NamingKind::FilePath)
    }

    pub fn inode_number() -> Self {
        Self::new(NamingKind::InodeNumber)
    }
}

/// Result of mapping an object name back to a file path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reverse {
    Path(String),
    /// The name carries no path information (e.g. an inode number).
    Unresolvable,
}

pub fn inode_base_name(ino: InodeNumber) -> String {
    format!("n/{:016x}", ino.0)
}

/// Base object name for a file at `ctx.path`.
///
/// Collision checks against names other files already own happen against
/// the metadata service's name registry, not here.
pub fn base_name(policy: &NamingPolicy, ctx: &NameContext<'_>) -> Result<String, NamingError> {
    let name = match policy.kind {
        NamingKind::FileName => ctx.path.rsplit('/').next().unwrap_or_default().to_string(),
        NamingKind::FilePath => ctx.path.trim_start_matches('/').to_string(),
        NamingKind::InodeNumber => inode_base_name(ctx.ino),
        NamingKind::UserDefined => {
            let hook = policy
                .hook
                .as_ref()
                .ok_or_else(|| NamingError::HookFailure("no naming hook configured".into()))?;
            hook.base_name(ctx).map_err(NamingError::HookFailure)?
        }
    };
    if name.is_empty() {
        return Err(NamingError::InvalidPath(ctx.path.to_string()));
    }
    Ok(name)
}

/// Object name of chunk `idx` of a file whose base name is `base`.
pub fn chunk_key(base: &str, idx: u64, scheme: MappingScheme) -> Result<String, NamingError> {
    match scheme {
        MappingScheme::OneToOne if idx == 0 => Ok(base.to_string()),
        MappingScheme::OneToOne => Err(NamingError::BadChunkIndex(idx)),
        MappingScheme::OneToN if idx < 10u64.pow(CHUNK_DIGITS as u32) => {
            Ok(format!("{base}{CHUNK_MARKER}{idx:0width$}", width = CHUNK_DIGITS))
        }
        MappingScheme::OneToN => Err(NamingError::BadChunkIndex(idx)),
    }
}

/// Splits a trailing chunk suffix off an object name, if there is one.
pub fn split_chunk_suffix(name: &str) -> (&str, Option<u64>) {
    let suffix_len = CHUNK_MARKER.len() + CHUNK_DIGITS;
    if name.len() > suffix_len {
        let (base, suffix) = name.split_at(name.len() - suffix_len);
        if let Some(digits) = suffix.strip_prefix(CHUNK_MARKER) {
            if digits.bytes().all(|b| b.is_ascii_digit()) {
                return (base, digits.parse().ok());
            }
        }
    }
    (name, None)
}

fn path_from_name(name: &str) -> Reverse {
    let valid = name
        .split('/')
        .all(|c| !c.is_empty() && c != "." && c != "..");
    if valid {
        Reverse::Path(format!("/{name}"))
    } else {
        Reverse::Unresolvable
    }
}

/// File path for an object called `object_name`, with any chunk suffix
/// stripped first.
///
/// `FileName` and `FilePath` both reconstruct `/<name>`, treating `/` in
/// the name as directory separators. Inode-number names never resolve.
pub fn reverse(policy: &NamingPolicy, object_name: &str) -> Reverse {
    let (base, _) = split_chunk_suffix(object_name);
    match policy.kind {
        NamingKind::FileName | NamingKind::FilePath => path_from_name(base),
        NamingKind::InodeNumber => Reverse::Unresolvable,
        NamingKind::UserDefined => policy
            .hook
            .as_ref()
            .and_then(|h| h.reverse(base))
            .map_or(Reverse::Unresolvable, Reverse::Path),
    }
}

/// Encodes an arbitrary object name as a single path component.
/// `%`, `/` and a leading `.` are percent-escaped; [`unsanitize`] inverts it.
pub fn sanitize(object_name: &str) -> String {
    let mut out = String::with_capacity(object_name.len());
    for (i, ch) in object_name.chars().enumerate() {
        match ch {
            '%' => out.push_str("%25"),
            '/' => out.push_str("%2F"),
            '.' if i == 0 => out.push_str("%2E"),
            c => out.push(c),
        }
    }
    out
}

pub fn unsanitize(component: &str) -> Option<String> {
    let mut out = String::with_capacity(component.len());
    let mut rest = component;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest.get(pos + 1..pos + 3)?;
        out.push(match code {
            "25" => '%',
            "2F" => '/',
            "2E" => '.',
            _ => return None,
        });
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Some(out)
}

/// `u/<uid>/<ino hex>`: groups objects by owner. Not reversible.
#[derive(Debug, Default)]
pub struct OwnerInodeHook;

impl NamingHook for OwnerInodeHook {
    fn id(&self) -> &str {
        "uid-ino"
    }

    fn base_name(&self, ctx: &NameContext<'_>) -> Result<String, String> {
        Ok(format!("u/{}/{:016x}", ctx.uid, ctx.ino.0))
    }
}

/// `<prefix><path without leading slash>`, reversible for names under the
/// prefix.
#[derive(Debug)]
pub struct PrefixedPathHook {
    pub prefix: String,
}

impl NamingHook for PrefixedPathHook {
    fn id(&self) -> &str {
        "prefixed-path"
    }

    fn base_name(&self, ctx: &NameContext<'_>) -> Result<String, String> {
        Ok(format!("{}{}", self.prefix, ctx.path.trim_start_matches('/')))
    }

    fn reverse(&self, base: &str) -> Option<String> {
        match path_from_name(base.strip_prefix(&self.prefix)?) {
            Reverse::Path(p) => Some(p),
            Reverse::Unresolvable => None,
        }
    }
}

/// Built-in hooks selectable by id from configuration.
pub fn hook_by_id(id: &str) -> Option<Arc<dyn NamingHook>> {
    match id {
        "uid-ino" => Some(Arc::new(OwnerInodeHook)),
        "prefixed-path" => Some(Arc::new(PrefixedPathHook { prefix: "fs/".into() })),
        _ => None,
    }
}
