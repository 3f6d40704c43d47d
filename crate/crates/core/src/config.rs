// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! store.kind = memory
//! store.latency.base_s = 0.02
//! naming.policy = filepath
//! mapping.scheme = 1toN
//! mapping.chunk_mib = 4
//! cache.kind = writeback
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cache::{CacheKind, CacheScope};
use crate::fs::{FsConfig, MetadataExport};
use crate::mapping::MappingScheme;
use crate::naming::{self, NamingKind, NamingPolicy};
use crate::object_store::{LatencyModel, StoreConfig};
use crate::MIB;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error("store kind {0:?} is not compiled in; only `memory` is available")]
    UnsupportedStore(String),
}

#[derive(Debug, Clone)]
pub struct Config {
    pub store: StoreConfig,
    pub fs: FsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            store: StoreConfig { latency: Some(LatencyModel::calibrated()), ..StoreConfig::default() },
            fs: FsConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "store.kind",
    "store.latency",
    "store.latency.base_s",
    "store.latency.bandwidth_mib_s",
    "store.latency.copy_bandwidth_mib_s",
    "store.latency.max_streams",
    "store.page_size",
    "naming.policy",
    "naming.user_hook",
    "mapping.scheme",
    "mapping.chunk_mib",
    "cache.kind",
    "cache.scope",
    "cache.capacity_mib",
    "cache.multipart_threshold_mib",
    "cache.part_mib",
    "cache.threads",
    "fs.bucket",
    "fs.metadata_export",
];

/// Parses `key = value` lines into a map. Keys are not validated here.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), value: value.to_string() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = num(key, value)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, value))
    }
}

fn mib(key: &str, value: &str) -> Result<u64, ConfigError> {
    let v = positive(key, value)?;
    Ok((v * MIB as f64).round() as u64)
}

pub fn parse_naming(value: &str) -> Option<NamingKind> {
    match value {
        "filename" => Some(NamingKind::FileName),
        "filepath" => Some(NamingKind::FilePath),
        "inode" => Some(NamingKind::InodeNumber),
        "user" => Some(NamingKind::UserDefined),
        _ => None,
    }
}

pub fn parse_scheme(value: &str) -> Option<MappingScheme> {
    match value {
        "1to1" => Some(MappingScheme::OneToOne),
        "1toN" | "1ton" => Some(MappingScheme::OneToN),
        _ => None,
    }
}

pub fn parse_cache_kind(value: &str) -> Option<CacheKind> {
    match value {
        "none" => Some(CacheKind::None),
        "writeback" => Some(CacheKind::WriteBack),
        _ => None,
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Config::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Applies one setting on top of the current values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let latency = || self.store.latency.unwrap_or_else(LatencyModel::calibrated);
        match key {
            "store.kind" => match value {
                "memory" => {}
                other => return Err(ConfigError::UnsupportedStore(other.to_string())),
            },
            "store.latency" => {
                self.store.latency = match value {
                    "calibrated" => Some(LatencyModel::calibrated()),
                    "off" => None,
                    _ => return Err(bad(key, value)),
                }
            }
            "store.latency.base_s" => {
                let l = latency();
                let base: f64 = num(key, value)?;
                self.store.latency = Some(
                    LatencyModel::new(
                        base,
                        mib_s(l.bandwidth_bps()),
                        mib_s(l.copy_bandwidth_bps()),
                        l.max_parallel_streams(),
                    )
                    .map_err(|_| bad(key, value))?,
                );
            }
            "store.latency.bandwidth_mib_s" => {
                let l = latency();
                self.store.latency = Some(
                    LatencyModel::new(
                        l.base_latency_s(),
                        positive(key, value)?,
                        mib_s(l.copy_bandwidth_bps()),
                        l.max_parallel_streams(),
                    )
                    .map_err(|_| bad(key, value))?,
                );
            }
            "store.latency.copy_bandwidth_mib_s" => {
                let l = latency();
                self.store.latency = Some(
                    LatencyModel::new(
                        l.base_latency_s(),
                        mib_s(l.bandwidth_bps()),
                        positive(key, value)?,
                        l.max_parallel_streams(),
                    )
                    .map_err(|_| bad(key, value))?,
                );
            }
            "store.latency.max_streams" => {
                let n: usize = num(key, value)?;
                if n == 0 {
                    return Err(bad(key, value));
                }
                self.store.latency = Some(latency().with_max_parallel_streams(n));
            }
            "store.page_size" => {
                let n: usize = num(key, value)?;
                if n == 0 {
                    return Err(bad(key, value));
                }
                self.store.page_size = n;
            }
            "naming.policy" => {
                let kind = parse_naming(value).ok_or_else(|| bad(key, value))?;
                self.fs.naming = NamingPolicy { kind, hook: self.fs.naming.hook.clone() };
            }
            "naming.user_hook" => {
                self.fs.naming.hook = Some(naming::hook_by_id(value).ok_or_else(|| bad(key, value))?);
            }
            "mapping.scheme" => {
                self.fs.mapping.scheme = parse_scheme(value).ok_or_else(|| bad(key, value))?;
            }
            "mapping.chunk_mib" => self.fs.mapping.chunk_size = mib(key, value)?,
            "cache.kind" => {
                self.fs.cache.kind = parse_cache_kind(value).ok_or_else(|| bad(key, value))?
            }
            "cache.scope" => {
                self.fs.cache.scope = match value {
                    "local" => CacheScope::Local,
                    "unified" => CacheScope::Unified,
                    _ => return Err(bad(key, value)),
                }
            }
            "cache.capacity_mib" => self.fs.cache.capacity_bytes = mib(key, value)?,
            "cache.multipart_threshold_mib" => self.fs.cache.multipart_threshold = mib(key, value)?,
            "cache.part_mib" => self.fs.cache.part_size = mib(key, value)?,
            "cache.threads" => {
                let n: usize = num(key, value)?;
                if n == 0 {
                    return Err(bad(key, value));
                }
                self.fs.cache.threads = n;
            }
            "fs.bucket" => {
                if value.is_empty() {
                    return Err(bad(key, value));
                }
                self.fs.bucket = value.to_string();
            }
            "fs.metadata_export" => {
                self.fs.metadata_export = match value {
                    "off" => MetadataExport::Off,
                    "in_object_meta" => MetadataExport::InObjectMeta,
                    _ => return Err(bad(key, value)),
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Renders every setting; [`Config::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("store.kind", "memory".into());
        match &self.store.latency {
            None => line("store.latency", "off".into()),
            Some(l) => {
                line("store.latency.base_s", l.base_latency_s().to_string());
                line("store.latency.bandwidth_mib_s", mib_s(l.bandwidth_bps()).to_string());
                line("store.latency.copy_bandwidth_mib_s", mib_s(l.copy_bandwidth_bps()).to_string());
                line("store.latency.max_streams", l.max_parallel_streams().to_string());
            }
        }
        line("store.page_size", self.store.page_size.to_string());
        line("naming.policy", self.fs.naming.kind.as_str().into());
        if let Some(h) = &self.fs.naming.hook {
            line("naming.user_hook", h.id().into());
        }
        line("mapping.scheme", self.fs.mapping.scheme.as_str().into());
        line("mapping.chunk_mib", (self.fs.mapping.chunk_size as f64 / MIB as f64).to_string());
        let c = &self.fs.cache;
        line("cache.kind", c.kind.as_str().into());
        line(
            "cache.scope",
            match c.scope {
                CacheScope::Local => "local",
                CacheScope::Unified => "unified",
            }
            .into(),
        );
        line("cache.capacity_mib", (c.capacity_bytes as f64 / MIB as f64).to_string());
        line("cache.multipart_threshold_mib", (c.multipart_threshold as f64 / MIB as f64).to_string());
        line("cache.part_mib", (c.part_size as f64 / MIB as f64).to_string());
        line("cache.threads", c.threads.to_string());
        line("fs.bucket", self.fs.bucket.clone());
        line(
            "fs.metadata_export",
            match self.fs.metadata_export {
                MetadataExport::Off => "off",
                MetadataExport::InObjectMeta => "in_object_meta",
            }
            .into(),
        );
        s
    }
}

fn mib_s(bps: u64) -> f64 {
    bps as f64 / MIB as f64
}
