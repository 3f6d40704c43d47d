// SPDX-License-Identifier: Apache-2.0

use std::fs as host;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use objfs::bench::{self, BenchError, RunSettings};
use objfs::config::Config;
use objfs::metadata::MetadataService;
use objfs::object_store::{MemoryStore, ObjectKey, UserMeta};
use objfs::{FileKind, Filesystem, FsError};

#[derive(Parser)]
#[command(name = "objfs", version, about = "File system over an object store")]
struct Cli {
    /// Directory holding a persistent file system (config, metadata, objects).
    #[arg(long, global = true, default_value = ".objfs")]
    state: PathBuf,
    /// Print object-store counters for the command to stderr.
    #[arg(long, global = true)]
    counters: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one workload on a fresh simulated store and print a CSV row.
    Bench(Box<BenchArgs>),
    /// Run the Cartesian product of a grid file.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// Also write the CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Create a new file system in the state directory.
    Mkfs {
        /// `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Copy files. Prefix file-system paths with `:`, e.g. `cp notes.txt :/notes.txt`.
    Cp { src: String, dst: String },
    /// Print a file.
    Cat { path: String },
    /// List a directory.
    Ls {
        #[arg(default_value = "/")]
        path: String,
        #[arg(short, long)]
        long: bool,
    },
    /// Rename.
    Mv { src: String, dst: String },
    /// Remove a file, or an empty directory with -d.
    Rm {
        path: String,
        #[arg(short = 'd', long)]
        dir: bool,
    },
    Mkdir { path: String },
    Stat { path: String },
    /// Adopt objects that were written straight to the bucket.
    Import {
        #[arg(default_value = "")]
        prefix: String,
    },
    /// Write a host file straight to the bucket as one object.
    Put { file: PathBuf, name: String },
    /// List the objects in the bucket.
    Objects {
        #[arg(default_value = "")]
        prefix: String,
    },
    /// Copy file attributes into object user metadata.
    SyncMeta,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    workload: String,
    #[arg(long, default_value = "64")]
    file_mib: String,
    #[arg(long, default_value = "4")]
    record_mib: String,
    #[arg(long, default_value = "1to1")]
    mapping: String,
    #[arg(long, default_value = "4")]
    chunk_mib: String,
    #[arg(long, default_value = "inode")]
    naming: String,
    #[arg(long, default_value = "writeback")]
    cache: String,
    #[arg(long, default_value = "8")]
    threads: String,
    #[arg(long, default_value = "0")]
    seed: String,
    #[arg(long, default_value = "16")]
    op_count: String,
    #[arg(long, default_value = "0")]
    dir_files: String,
    /// Base configuration file (store latency model and so on).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Fs(#[from] FsError),
    #[error("{0}")]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Config(#[from] objfs::config::ConfigError),
    #[error("{0}")]
    Store(#[from] objfs::object_store::StoreError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("objfs: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Bench(args) => bench_cmd(*args),
        Cmd::Sweep { grid, csv } => {
            let samples = bench::sweep(&host::read_to_string(grid)?)?;
            emit_csv(&bench::to_csv(&samples)?, csv.as_deref())
        }
        Cmd::Mkfs { config, set } => mkfs(&cli.state, config.as_deref(), &set),
        cmd => {
            let state = State::open(&cli.state)?;
            let before = state.fs.store().counters();
            let mutated = shell(&state.fs, cmd)?;
            if cli.counters {
                let d = state.fs.store().counters().since(&before);
                eprintln!(
                    "puts={} gets={} dels={} copies={} lists={} bytes_up={} bytes_down={} virtual_s={:.6}",
                    d.puts, d.gets, d.dels, d.copies, d.lists, d.bytes_uploaded, d.bytes_downloaded,
                    d.virtual_seconds()
                );
            }
            if mutated {
                state.save()?;
            }
            Ok(())
        }
    }
}

fn bench_cmd(a: BenchArgs) -> Result<(), CliError> {
    let mut s = RunSettings::default();
    if let Some(path) = &a.config {
        s.config = Config::parse(&host::read_to_string(path)?)?;
    }
    let pairs = [
        ("workload", &a.workload),
        ("file_mib", &a.file_mib),
        ("record_mib", &a.record_mib),
        ("mapping", &a.mapping),
        ("chunk_mib", &a.chunk_mib),
        ("naming", &a.naming),
        ("cache", &a.cache),
        ("threads", &a.threads),
        ("seed", &a.seed),
        ("op_count", &a.op_count),
        ("dir_files", &a.dir_files),
    ];
    for (k, v) in pairs {
        s.set(k, v)?;
    }
    let sample = bench::run(&s.spec, &s.config)?;
    emit_csv(&bench::to_csv(&[sample])?, a.csv.as_deref())
}

fn emit_csv(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    print!("{text}");
    if let Some(p) = path {
        host::write(p, text)?;
    }
    Ok(())
}

const CONFIG_FILE: &str = "config.conf";
const META_DIR: &str = "meta";
const STORE_FILE: &str = "store.bin";

fn mkfs(state: &Path, config: Option<&Path>, set: &[String]) -> Result<(), CliError> {
    if state.join(CONFIG_FILE).exists() {
        return Err(FsError::AlreadyFormatted.into());
    }
    let mut cfg = match config {
        Some(p) => Config::parse(&host::read_to_string(p)?)?,
        None => Config::default(),
    };
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    host::create_dir_all(state)?;
    let store = Arc::new(MemoryStore::new(cfg.store.clone()));
    let meta = Arc::new(MetadataService::open(&state.join(META_DIR)).map_err(FsError::from)?);
    Filesystem::mkfs(store.clone(), meta.clone(), cfg.fs.clone())?;
    store.save(&state.join(STORE_FILE))?;
    meta.snapshot().map_err(FsError::from)?;
    host::write(state.join(CONFIG_FILE), cfg.to_text())?;
    println!("formatted {}", state.display());
    Ok(())
}

struct State {
    dir: PathBuf,
    store: Arc<MemoryStore>,
    meta: Arc<MetadataService>,
    fs: Filesystem,
}

impl State {
    fn open(dir: &Path) -> Result<Self, CliError> {
        let text = host::read_to_string(dir.join(CONFIG_FILE)).map_err(|_| {
            CliError::Usage(format!("no file system at {} (run `objfs mkfs`)", dir.display()))
        })?;
        let cfg = Config::parse(&text)?;
        let store = Arc::new(MemoryStore::load(&dir.join(STORE_FILE), cfg.store.clone())?);
        let meta = Arc::new(MetadataService::open(&dir.join(META_DIR)).map_err(FsError::from)?);
        let fs = Filesystem::mount(store.clone(), meta.clone(), cfg.fs)?;
        Ok(State { dir: dir.to_path_buf(), store, meta, fs })
    }

    fn save(&self) -> Result<(), CliError> {
        self.store.save(&self.dir.join(STORE_FILE))?;
        self.meta.snapshot().map_err(FsError::from)?;
        Ok(())
    }
}

fn fs_path(arg: &str) -> Option<&str> {
    arg.strip_prefix(':')
}

/// Runs a shell command; returns whether anything changed.
fn shell(fs: &Filesystem, cmd: Cmd) -> Result<bool, CliError> {
    let mut out = io::stdout().lock();
    match cmd {
        Cmd::Cp { src, dst } => {
            let data = match fs_path(&src) {
                Some(p) => fs.read_file(p)?,
                None => host::read(&src)?,
            };
            match fs_path(&dst) {
                Some(p) => fs.write_file(p, &data)?,
                None => host::write(&dst, &data)?,
            }
            Ok(fs_path(&dst).is_some())
        }
        Cmd::Cat { path } => {
            out.write_all(&fs.read_file(&path)?)?;
            Ok(false)
        }
        Cmd::Ls { path, long } => {
            for name in fs.readdir(&path)? {
                if long {
                    let full = if path.ends_with('/') { format!("{path}{name}") } else { format!("{path}/{name}") };
                    let st = fs.lstat(&full)?;
                    let kind = match st.kind {
                        FileKind::Dir => 'd',
                        FileKind::File => '-',
                        FileKind::Symlink => 'l',
                    };
                    writeln!(out, "{kind}{:04o} {:>3} {:>5} {:>5} {:>12} {name}", st.mode, st.nlink, st.uid, st.gid, st.size)?;
                } else {
                    writeln!(out, "{name}")?;
                }
            }
            Ok(false)
        }
        Cmd::Mv { src, dst } => {
            fs.rename(&src, &dst)?;
            Ok(true)
        }
        Cmd::Rm { path, dir } => {
            if dir {
                fs.rmdir(&path)?;
            } else {
                fs.unlink(&path)?;
            }
            Ok(true)
        }
        Cmd::Mkdir { path } => {
            fs.mkdir(&path, 0o755)?;
            Ok(true)
        }
        Cmd::Stat { path } => {
            let st = fs.lstat(&path)?;
            writeln!(out, "inode:   {}", st.ino)?;
            writeln!(out, "kind:    {:?}", st.kind)?;
            writeln!(out, "mode:    {:04o}", st.mode)?;
            writeln!(out, "links:   {}", st.nlink)?;
            writeln!(out, "uid/gid: {}/{}", st.uid, st.gid)?;
            writeln!(out, "size:    {}", st.size)?;
            if let (Some(base), Some(m)) = (&st.object_base, &st.mapping) {
                writeln!(out, "object:  {base} ({})", m.scheme.as_str())?;
            }
            if let Some(t) = &st.symlink_target {
                writeln!(out, "target:  {t}")?;
            }
            Ok(false)
        }
        Cmd::Import { prefix } => {
            let report = fs.import_objects(&prefix)?;
            for p in &report.created {
                writeln!(out, "imported {p}")?;
            }
            for (name, why) in &report.skipped {
                writeln!(out, "skipped {name}: {why}")?;
            }
            Ok(!report.created.is_empty())
        }
        Cmd::Put { file, name } => {
            let key = ObjectKey::new(fs.config().bucket.clone(), name)?;
            fs.store().put(&key, host::read(file)?.into(), UserMeta::new())?;
            Ok(true)
        }
        Cmd::Objects { prefix } => {
            for o in fs.store().list(&fs.config().bucket, &prefix)? {
                writeln!(out, "{:>12} {}", o.size, o.name)?;
            }
            Ok(false)
        }
        Cmd::SyncMeta => {
            let n = fs.sync_meta_to_objects()?;
            writeln!(out, "exported {n} files")?;
            Ok(true)
        }
        Cmd::Bench(_) | Cmd::Sweep { .. } | Cmd::Mkfs { .. } => unreachable!("handled by caller"),
    }
}
