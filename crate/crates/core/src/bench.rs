// SPDX-License-Identifier: Apache-2.0

//! Workload harness.
//!
//! Each run builds a fresh file system on an instrumented in-memory store,
//! preloads whatever the workload needs, then measures the store counters
//! and simulated time of the workload body alone.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::CacheKind;
use crate::config::{self, Config, ConfigError};
use crate::fs::{Filesystem, FsError, OpenFlags};
use crate::mapping::{MappingDescriptor, MappingScheme};
use crate::metadata::MetadataService;
use crate::naming::{NamingKind, NamingPolicy};
use crate::object_store::{MemoryStore, ObjectKey, ObjectStore, OpCounters, UserMeta};
use crate::MIB;

pub const CSV_HEADER: &str = "workload,mapping,naming,cache,threads,file_mib,chunk_mib,puts,gets,dels,copies,bytes_up,bytes_down,virtual_s,throughput_mib_s";

const BENCH_DIR: &str = "bench";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    StreamRead,
    StreamWrite,
    RandomWrite,
    RenameFile,
    RenameDir,
}

impl WorkloadKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WorkloadKind::StreamRead => "stream_read",
            WorkloadKind::StreamWrite => "stream_write",
            WorkloadKind::RandomWrite => "random_write",
            WorkloadKind::RenameFile => "rename_file",
            WorkloadKind::RenameDir => "rename_dir",
        }
    }
}

impl FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "stream_read" => WorkloadKind::StreamRead,
            "stream_write" => WorkloadKind::StreamWrite,
            "random_write" => WorkloadKind::RandomWrite,
            "rename_file" => WorkloadKind::RenameFile,
            "rename_dir" => WorkloadKind::RenameDir,
            other => return Err(format!("unknown workload {other:?}")),
        })
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// File size; for `RenameDir`, the size of each file.
    pub file_size: u64,
    pub record_size: u64,
    /// Writes issued by `RandomWrite`.
    pub op_count: u64,
    /// Files in the directory `RenameDir` moves.
    pub dir_file_count: u64,
    /// Transfer parallelism handed to the cache.
    pub threads: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, file_size: u64) -> Self {
        WorkloadSpec {
            kind,
            file_size,
            record_size: 4 * MIB,
            op_count: 16,
            dir_file_count: 0,
            threads: 8,
            seed: 0,
        }
    }

    /// Bytes the application asks to move.
    pub fn payload_bytes(&self) -> u64 {
        match self.kind {
            WorkloadKind::RandomWrite => self.op_count * self.record_size,
            WorkloadKind::RenameDir => self.dir_file_count * self.file_size,
            _ => self.file_size,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    Spec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("object store: {0}")]
    Store(#[from] crate::object_store::StoreError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSample {
    pub spec: WorkloadSpec,
    pub mapping: MappingDescriptor,
    pub naming: NamingKind,
    pub cache: CacheKind,
    pub counters: OpCounters,
    pub virtual_s: f64,
    pub payload_bytes: u64,
}

impl BenchSample {
    /// Application payload MiB per simulated second; infinite when the
    /// workload took no simulated time.
    pub fn throughput_mib_s(&self) -> f64 {
        let mib = self.payload_bytes as f64 / MIB as f64;
        if self.virtual_s == 0.0 {
            f64::INFINITY
        } else {
            mib / self.virtual_s
        }
    }

    pub fn csv_record(&self) -> Vec<String> {
        let c = &self.counters;
        let chunk_mib = match self.mapping.scheme {
            MappingScheme::OneToOne => 0.0,
            MappingScheme::OneToN => self.mapping.chunk_size as f64 / MIB as f64,
        };
        let tput = self.throughput_mib_s();
        vec![
            self.spec.kind.to_string(),
            self.mapping.scheme.as_str().to_string(),
            self.naming.as_str().to_string(),
            self.cache.as_str().to_string(),
            self.spec.threads.to_string(),
            fmt_num(self.spec.file_size as f64 / MIB as f64),
            fmt_num(chunk_mib),
            c.puts.to_string(),
            c.gets.to_string(),
            c.dels.to_string(),
            c.copies.to_string(),
            c.bytes_uploaded.to_string(),
            c.bytes_downloaded.to_string(),
            format!("{:.6}", self.virtual_s),
            if tput.is_finite() { format!("{tput:.3}") } else { "inf".into() },
        ]
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Renders samples as CSV with [`CSV_HEADER`].
pub fn to_csv(samples: &[BenchSample]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for s in samples {
        w.write_record(s.csv_record())?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Spec(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn validate(spec: &WorkloadSpec) -> Result<(), BenchError> {
    if spec.threads == 0 {
        return Err(BenchError::Spec("threads must be at least 1".into()));
    }
    if spec.record_size == 0 {
        return Err(BenchError::Spec("record size must be positive".into()));
    }
    match spec.kind {
        WorkloadKind::RenameDir if spec.dir_file_count == 0 => {
            Err(BenchError::Spec("rename_dir needs a directory file count".into()))
        }
        WorkloadKind::RandomWrite if spec.file_size < spec.record_size => {
            Err(BenchError::Spec("random_write needs a file at least one record long".into()))
        }
        _ => Ok(()),
    }
}

struct Bed {
    fs: Filesystem,
    store: Arc<MemoryStore>,
}

impl Bed {
    fn new(spec: &WorkloadSpec, config: &Config) -> Result<Self, BenchError> {
        let store = Arc::new(MemoryStore::new(config.store.clone()));
        let mut fs_config = config.fs.clone();
        fs_config.cache.threads = spec.threads;
        let fs = Filesystem::mkfs(store.clone(), Arc::new(MetadataService::in_memory()), fs_config)?;
        Ok(Bed { fs, store })
    }

    /// Places `data` at `path`. One-to-one layouts go in as a plain object
    /// that is then imported; chunked layouts are written through the file
    /// system, since imported objects are always single-object files.
    /// Returns the file's path.
    fn preload(&self, path: &str, data: Bytes) -> Result<String, BenchError> {
        if self.fs.config().mapping.is_chunked() {
            mkdir_p(&self.fs, parent(path))?;
            self.fs.write_file(path, &data)?;
            return Ok(path.to_string());
        }
        let name = path.trim_start_matches('/');
        let key = ObjectKey::new(self.fs.config().bucket.clone(), name)?;
        self.store.put(&key, data, UserMeta::new())?;
        let report = self.fs.import_objects(name)?;
        report
            .created
            .into_iter()
            .next()
            .ok_or_else(|| BenchError::Spec(format!("preload of {path} was not imported")))
    }
}

fn parent(path: &str) -> &str {
    match path.rfind('/') {
        Some(0) | None => "/",
        Some(i) => &path[..i],
    }
}

fn mkdir_p(fs: &Filesystem, dir: &str) -> Result<(), FsError> {
    let mut cur = String::new();
    for c in dir.split('/').filter(|c| !c.is_empty()) {
        cur.push('/');
        cur.push_str(c);
        match fs.mkdir(&cur, 0o755) {
            Ok(()) | Err(FsError::Exists) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn pattern(len: u64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0u8; len as usize];
    rng.fill(&mut v[..]);
    v
}

/// Runs one workload against a fresh file system built from `config`.
pub fn run(spec: &WorkloadSpec, config: &Config) -> Result<BenchSample, BenchError> {
    validate(spec)?;
    let bed = Bed::new(spec, config)?;
    let fs = &bed.fs;
    let record = spec.record_size;
    let file = format!("/{BENCH_DIR}/file");

    let before: OpCounters;
    match spec.kind {
        WorkloadKind::StreamRead => {
            let path = bed.preload(&file, Bytes::from(pattern(spec.file_size, spec.seed)))?;
            before = bed.store.counters();
            let h = fs.open(&path, OpenFlags::RDONLY)?;
            let mut off = 0;
            while off < spec.file_size {
                fs.read(h, off, record)?;
                off += record;
            }
            fs.close(h)?;
        }
        WorkloadKind::StreamWrite => {
            mkdir_p(fs, BENCH_DIR)?;
            let h = fs.create(&file, 0o644)?;
            let chunk = pattern(record, spec.seed);
            before = bed.store.counters();
            let mut off = 0;
            while off < spec.file_size {
                let n = record.min(spec.file_size - off) as usize;
                fs.write(h, off, &chunk[..n])?;
                off += n as u64;
            }
            fs.close(h)?;
        }
        WorkloadKind::RandomWrite => {
            mkdir_p(fs, BENCH_DIR)?;
            fs.write_file(&file, &pattern(spec.file_size, spec.seed))?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let chunk = pattern(record, spec.seed.wrapping_add(1));
            let slots = spec.file_size / record;
            before = bed.store.counters();
            let h = fs.open(&file, OpenFlags::RDWR)?;
            for _ in 0..spec.op_count {
                let off = rng.gen_range(0..slots) * record;
                fs.write(h, off, &chunk)?;
            }
            fs.close(h)?;
        }
        WorkloadKind::RenameFile => {
            let path = bed.preload(&file, Bytes::from(pattern(spec.file_size, spec.seed)))?;
            let dst = format!("{}/renamed", parent(&path));
            before = bed.store.counters();
            fs.rename(&path, &dst)?;
        }
        WorkloadKind::RenameDir => {
            let dir = format!("/{BENCH_DIR}/dir");
            mkdir_p(fs, &dir)?;
            for i in 0..spec.dir_file_count {
                let want = format!("{dir}/f{i:06}");
                let data = Bytes::from(pattern(spec.file_size, spec.seed.wrapping_add(i)));
                let got = bed.preload(&want, data)?;
                if got != want {
                    fs.rename(&got, &want)?;
                }
            }
            before = bed.store.counters();
            fs.rename(&dir, &format!("/{BENCH_DIR}/moved"))?;
        }
    }
    let counters = bed.store.counters().since(&before);
    Ok(BenchSample {
        spec: spec.clone(),
        mapping: fs.config().mapping,
        naming: fs.config().naming.kind,
        cache: fs.config().cache.kind,
        virtual_s: counters.virtual_seconds(),
        payload_bytes: spec.payload_bytes(),
        counters,
    })
}

/// Workload plus configuration for one run, settable by key.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub spec: WorkloadSpec,
    pub config: Config,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            spec: WorkloadSpec::new(WorkloadKind::StreamWrite, 64 * MIB),
            config: Config::default(),
        }
    }
}

fn parse_mib(key: &str, value: &str) -> Result<u64, BenchError> {
    let v: f64 = value.parse().map_err(|_| BenchError::Spec(format!("bad {key}: {value:?}")))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(BenchError::Spec(format!("bad {key}: {value:?}")));
    }
    Ok((v * MIB as f64).round() as u64)
}

fn parse_int<T: FromStr>(key: &str, value: &str) -> Result<T, BenchError> {
    value.parse().map_err(|_| BenchError::Spec(format!("bad {key}: {value:?}")))
}

impl RunSettings {
    /// Workload keys (`workload`, `file_mib`, `record_mib`, `op_count`,
    /// `dir_files`, `threads`, `seed`), the shorthands `mapping`,
    /// `chunk_mib`, `naming` and `cache`, or any configuration file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        match key {
            "workload" => self.spec.kind = value.parse().map_err(BenchError::Spec)?,
            "file_mib" => self.spec.file_size = parse_mib(key, value)?,
            "record_mib" => self.spec.record_size = parse_mib(key, value)?,
            "op_count" => self.spec.op_count = parse_int(key, value)?,
            "dir_files" => self.spec.dir_file_count = parse_int(key, value)?,
            "threads" => self.spec.threads = parse_int(key, value)?,
            "seed" => self.spec.seed = parse_int(key, value)?,
            "mapping" => self.config.set("mapping.scheme", value)?,
            "chunk_mib" => self.config.set("mapping.chunk_mib", value)?,
            "naming" => {
                let kind = config::parse_naming(value)
                    .ok_or_else(|| BenchError::Spec(format!("bad naming: {value:?}")))?;
                self.config.fs.naming = NamingPolicy { kind, hook: self.config.fs.naming.hook.clone() };
            }
            "cache" => self.config.set("cache.kind", value)?,
            other => self.config.set(other, value)?,
        }
        Ok(())
    }
}

/// A sweep grid: each line is `key = v1, v2, ...`. Runs the Cartesian
/// product, varying the last key fastest.
pub fn parse_grid(text: &str) -> Result<Vec<(String, Vec<String>)>, BenchError> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| BenchError::Spec(format!("grid line {}: expected `key = values`", i + 1)))?;
        let values: Vec<String> =
            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if values.is_empty() {
            return Err(BenchError::Spec(format!("grid line {}: no values", i + 1)));
        }
        let key = k.trim().to_string();
        match axes.iter_mut().find(|(k, _)| *k == key) {
            Some((_, vals)) => *vals = values,
            None => axes.push((key, values)),
        }
    }
    Ok(axes)
}

/// Every point of the grid, in order.
pub fn grid_points(axes: &[(String, Vec<String>)]) -> Result<Vec<RunSettings>, BenchError> {
    let mut points = vec![RunSettings::default()];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                q.set(key, v)?;
                next.push(q);
            }
        }
        points = next;
    }
    Ok(points)
}

/// Runs every grid point and returns the samples in grid order.
pub fn sweep(grid_text: &str) -> Result<Vec<BenchSample>, BenchError> {
    let axes = parse_grid(grid_text)?;
    grid_points(&axes)?.iter().map(|p| run(&p.spec, &p.config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> RunSettings {
        let mut s = RunSettings::default();
        for (k, v) in pairs {
            s.set(k, v).unwrap();
        }
        s
    }

    fn run_with(pairs: &[(&str, &str)]) -> BenchSample {
        let s = settings(pairs);
        run(&s.spec, &s.config).unwrap()
    }

    #[test]
    fn stream_write_multipart_counts() {
        let s = run_with(&[("workload", "stream_write"), ("file_mib", "64"), ("cache", "writeback")]);
        assert_eq!((s.counters.puts, s.counters.gets), (16, 0));
        assert_eq!(s.counters.bytes_uploaded, 64 * MIB);
    }

    #[test]
    fn random_write_no_cache_one_to_one_counts() {
        let s = run_with(&[
            ("workload", "random_write"),
            ("file_mib", "64"),
            ("cache", "none"),
            ("mapping", "1to1"),
        ]);
        assert_eq!((s.counters.gets, s.counters.puts), (16, 16));
        assert_eq!(s.counters.bytes_downloaded, 16 * 64 * MIB);
    }

    #[test]
    fn stream_read_fetches_whole_file() {
        let s = run_with(&[("workload", "stream_read"), ("file_mib", "32"), ("cache", "writeback")]);
        assert_eq!(s.counters.bytes_downloaded, 32 * MIB);
        assert_eq!(s.counters.puts, 0);
        let s = run_with(&[
            ("workload", "stream_read"),
            ("file_mib", "32"),
            ("cache", "none"),
            ("mapping", "1toN"),
            ("chunk_mib", "4"),
        ]);
        assert_eq!(s.counters.gets, 8);
    }

    #[test]
    fn rename_dir_counts_and_requires_file_count() {
        let s = run_with(&[
            ("workload", "rename_dir"),
            ("file_mib", "1"),
            ("dir_files", "8"),
            ("naming", "filepath"),
        ]);
        assert_eq!((s.counters.copies, s.counters.dels), (8, 8));
        let s = run_with(&[("workload", "rename_dir"), ("file_mib", "1"), ("dir_files", "8")]);
        assert_eq!(s.counters.total_ops(), 0);
        assert!(s.throughput_mib_s().is_infinite());
        let bad = settings(&[("workload", "rename_dir")]);
        assert!(matches!(run(&bad.spec, &bad.config), Err(BenchError::Spec(_))));
    }

    #[test]
    fn grid_product_in_file_order() {
        let axes = parse_grid("workload = stream_write\nthreads = 2, 4\nfile_mib = 1,2\n").unwrap();
        let points = grid_points(&axes).unwrap();
        let got: Vec<(usize, u64)> =
            points.iter().map(|p| (p.spec.threads, p.spec.file_size / MIB)).collect();
        assert_eq!(got, [(2, 1), (2, 2), (4, 1), (4, 2)]);
    }

    #[test]
    fn sweep_csv_is_deterministic() {
        let grid = "workload = random_write\nfile_mib = 16\nop_count = 4\nseed = 7\ncache = none, writeback\n";
        let a = to_csv(&sweep(grid).unwrap()).unwrap();
        let b = to_csv(&sweep(grid).unwrap()).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER);
    }

    #[test]
    fn throughput_column_recomputes() {
        let samples = sweep("workload = stream_write\nfile_mib = 8, 24\nthreads = 1, 8\n").unwrap();
        let csv = to_csv(&samples).unwrap();
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        for (rec, s) in rdr.records().zip(&samples) {
            let rec = rec.unwrap();
            let file_mib: f64 = rec[5].parse().unwrap();
            let bytes_up: f64 = rec[11].parse().unwrap();
            let virtual_s: f64 = rec[13].parse().unwrap();
            let tput: f64 = rec[14].parse().unwrap();
            // Stream writes upload exactly the payload.
            assert_eq!(bytes_up, file_mib * MIB as f64);
            let recomputed = bytes_up / MIB as f64 / virtual_s;
            assert!((recomputed - tput).abs() <= 1e-3 * tput.max(1.0), "{recomputed} vs {tput}");
            assert_eq!(s.payload_bytes as f64, bytes_up);
        }
    }
}
