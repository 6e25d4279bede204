use std::cell::Cell;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Mutex, MutexGuard, RwLock, RwLockReadGuard};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use super::state::{ApplyError, Entity, Event, State};
use crate::codec::{self, CodecError, ScanEnd};

const LOCK_FILE: &str = "LOCK";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 10_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corrupt record at byte {offset} of {}", path.display())]
    CorruptLog { path: PathBuf, offset: u64 },
    #[error("store directory {} is in use by another process", .0.display())]
    Locked(PathBuf),
    #[error("record in {} cannot be applied: {source}", path.display())]
    Replay {
        path: PathBuf,
        #[source]
        source: ApplyError,
    },
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Source of commit timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

/// Wall clock truncated to milliseconds.
#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        let ms = Utc::now().timestamp_millis();
        Utc.timestamp_millis_opt(ms).unwrap()
    }
}

/// Starts at a fixed instant and advances by `step_ms` on every reading.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicI64,
    step_ms: i64,
}

impl StepClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            next: AtomicI64::new(start.timestamp_millis()),
            step_ms,
        }
    }
}

impl Clock for StepClock {
    fn now(&self) -> DateTime<Utc> {
        let ms = self.next.fetch_add(self.step_ms, Ordering::SeqCst);
        Utc.timestamp_millis_opt(ms).unwrap()
    }
}

/// Source of entity ids.
#[derive(Debug)]
pub enum IdSource {
    Random,
    /// Deterministic ids for reproducible runs.
    Seeded {
        seed: u64,
        counter: u64,
    },
}

const ID_NAMESPACE: Uuid = Uuid::from_u128(0x6d66_7265_6769_7374_7279_2d69_6473_0001);

impl IdSource {
    pub fn seeded(seed: u64) -> Self {
        Self::Seeded { seed, counter: 0 }
    }

    fn next(&mut self) -> String {
        match self {
            Self::Random => Uuid::new_v4().to_string(),
            Self::Seeded { seed, counter } => {
                *counter += 1;
                let mut name = [0u8; 16];
                name[..8].copy_from_slice(&seed.to_le_bytes());
                name[8..].copy_from_slice(&counter.to_le_bytes());
                Uuid::new_v5(&ID_NAMESPACE, &name).to_string()
            }
        }
    }
}

/// Deterministic id for names that must map to the same id on every replay.
pub fn derived_id(name: &str) -> String {
    Uuid::new_v5(&ID_NAMESPACE, name.as_bytes()).to_string()
}

pub struct StoreOptions {
    /// fsync after every commit.
    pub sync: bool,
    /// Take a snapshot after this many commits since the last one.
    pub snapshot_every: u64,
    pub clock: Box<dyn Clock>,
    pub ids: IdSource,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            sync: true,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            clock: Box::new(SystemClock),
            ids: IdSource::Random,
        }
    }
}

/// Log record: all events of one commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "entity", rename_all = "snake_case")]
enum SnapshotHeader {
    Header { generation: u64, commits: u64 },
}

enum Sink {
    Memory(Vec<u8>),
    Disk {
        dir: PathBuf,
        log: File,
        generation: u64,
        _lock: File,
    },
}

struct Writer {
    sink: Sink,
    commits: u64,
    since_snapshot: u64,
    options: StoreOptions,
}

/// Pending events of one commit, with the commit's timestamp and id source.
pub struct Tx<'a> {
    clock: &'a dyn Clock,
    now: Cell<Option<DateTime<Utc>>>,
    ids: &'a mut IdSource,
    events: Vec<Event>,
}

impl Tx<'_> {
    /// Commit timestamp. The clock is read once, on first use.
    pub fn now(&self) -> DateTime<Utc> {
        match self.now.get() {
            Some(t) => t,
            None => {
                let t = self.clock.now();
                self.now.set(Some(t));
                t
            }
        }
    }

    pub fn new_id(&mut self) -> String {
        self.ids.next()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

/// What `open_recovering` had to discard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovery {
    pub path: PathBuf,
    pub offset: u64,
    /// Where the discarded bytes were saved.
    pub saved_to: PathBuf,
}

/// Single-writer registry store. Reads see the state as of the last
/// completed commit.
pub struct Store {
    writer: Mutex<Writer>,
    state: RwLock<State>,
}

fn log_path(dir: &Path, generation: u64) -> PathBuf {
    dir.join(format!("events-{generation:08}.log"))
}

fn snapshot_path(dir: &Path, generation: u64) -> PathBuf {
    dir.join(format!("snapshot-{generation:08}.snap"))
}

fn generations(dir: &Path, prefix: &str, suffix: &str) -> io::Result<Vec<u64>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(g) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(suffix))
            .and_then(|g| g.parse().ok())
        {
            out.push(g);
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

fn load_snapshot(path: &Path) -> Result<(State, u64), StoreError> {
    let bytes = fs::read(path)?;
    let scan = codec::scan_frames(&bytes);
    match scan.end {
        ScanEnd::Clean => {}
        ScanEnd::TornTail { offset } | ScanEnd::Corrupt { offset } => {
            return Err(StoreError::CorruptLog {
                path: path.to_path_buf(),
                offset,
            })
        }
    }
    let mut frames = scan.frames.into_iter();
    let (off, first) = frames.next().ok_or_else(|| StoreError::CorruptLog {
        path: path.to_path_buf(),
        offset: 0,
    })?;
    let SnapshotHeader::Header { commits, .. } = codec::decode_payload(off, first)?;
    let entities = frames
        .map(|(off, p)| codec::decode_payload::<Entity>(off, p))
        .collect::<Result<Vec<_>, _>>()?;
    let state = State::from_entities(entities).map_err(|source| StoreError::Replay {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((state, commits))
}

fn replay(
    state: &mut State,
    path: &Path,
    bytes: &[u8],
    commits: &mut u64,
) -> Result<ScanEnd, StoreError> {
    let scan = codec::scan_frames(bytes);
    for (off, payload) in &scan.frames {
        let commit: Commit = codec::decode_payload(*off, payload)?;
        for e in &commit.events {
            state.apply(e).map_err(|source| StoreError::Replay {
                path: path.to_path_buf(),
                source,
            })?;
        }
        *commits = commit.seq;
    }
    Ok(match scan.end {
        ScanEnd::Corrupt { .. } => scan.end,
        ScanEnd::TornTail { .. } | ScanEnd::Clean => {
            if scan.valid_len < bytes.len() as u64 {
                ScanEnd::TornTail {
                    offset: scan.valid_len,
                }
            } else {
                ScanEnd::Clean
            }
        }
    })
}

impl Store {
    /// A store that keeps its log in memory.
    pub fn in_memory(options: StoreOptions) -> Self {
        Self {
            writer: Mutex::new(Writer {
                sink: Sink::Memory(Vec::new()),
                commits: 0,
                since_snapshot: 0,
                options,
            }),
            state: RwLock::new(State::default()),
        }
    }

    /// Opens (or creates) the store in `dir`. A checksum failure in the log
    /// is an error; an incomplete final record is dropped.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        Self::open_inner(dir.as_ref(), options, false).map(|(s, _)| s)
    }

    /// Like [`Store::open`], but on a checksum failure keeps the valid prefix,
    /// moves the rest of the log aside and reports where it was cut.
    pub fn open_recovering(
        dir: impl AsRef<Path>,
        options: StoreOptions,
    ) -> Result<(Self, Option<Recovery>), StoreError> {
        Self::open_inner(dir.as_ref(), options, true)
    }

    fn open_inner(
        dir: &Path,
        options: StoreOptions,
        recover: bool,
    ) -> Result<(Self, Option<Recovery>), StoreError> {
        fs::create_dir_all(dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        if lock.try_lock().is_err() {
            return Err(StoreError::Locked(dir.to_path_buf()));
        }

        let snapshots = generations(dir, "snapshot-", ".snap")?;
        let (mut state, mut commits, generation) = match snapshots.last() {
            Some(&g) => {
                let (s, c) = load_snapshot(&snapshot_path(dir, g))?;
                (s, c, g)
            }
            None => (State::default(), 0, 0),
        };
        let path = log_path(dir, generation);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut recovery = None;
        let keep = match replay(&mut state, &path, &bytes, &mut commits)? {
            ScanEnd::Clean => None,
            ScanEnd::TornTail { offset } => {
                tracing::warn!(path = %path.display(), offset, "dropping incomplete final log record");
                Some(offset)
            }
            ScanEnd::Corrupt { offset } => {
                if !recover {
                    return Err(StoreError::CorruptLog { path, offset });
                }
                let saved_to = dir.join(format!("events-{generation:08}.log.corrupt-{offset}"));
                fs::write(&saved_to, &bytes[offset as usize..])?;
                tracing::error!(path = %path.display(), offset, "log corrupt; tail moved aside");
                recovery = Some(Recovery {
                    path: path.clone(),
                    offset,
                    saved_to,
                });
                Some(offset)
            }
        };
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        if let Some(len) = keep {
            log.set_len(len)?;
            log.sync_all()?;
        }
        sync_dir(dir)?;

        // Snapshots hold the full state, so older generations are garbage.
        for g in generations(dir, "snapshot-", ".snap")? {
            if g < generation {
                let _ = fs::remove_file(snapshot_path(dir, g));
            }
        }
        for g in generations(dir, "events-", ".log")? {
            if g < generation {
                let _ = fs::remove_file(log_path(dir, g));
            }
        }

        let store = Self {
            writer: Mutex::new(Writer {
                sink: Sink::Disk {
                    dir: dir.to_path_buf(),
                    log,
                    generation,
                    _lock: lock,
                },
                commits,
                since_snapshot: 0,
                options,
            }),
            state: RwLock::new(state),
        };
        Ok((store, recovery))
    }

    /// Read access to the current state.
    pub fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn lock_writer(&self) -> MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.lock_writer().options.clock.now()
    }

    /// Number of commits so far.
    pub fn commits(&self) -> u64 {
        self.lock_writer().commits
    }

    /// Runs `f` against the current state as the only writer. Events it
    /// pushes are appended as one durable log record and then applied. When
    /// `f` fails or pushes nothing, nothing is written.
    pub fn transact<T, E>(
        &self,
        f: impl FnOnce(&State, &mut Tx<'_>) -> Result<T, E>,
    ) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let mut w = self.lock_writer();
        let w = &mut *w;
        let mut tx = Tx {
            clock: &*w.options.clock,
            now: Cell::new(None),
            ids: &mut w.options.ids,
            events: Vec::new(),
        };
        let value = {
            let state = self.read();
            let value = f(&state, &mut tx)?;
            if tx.events.is_empty() {
                return Ok(value);
            }
            // Operations check their own preconditions; debug builds also
            // dry-run the events so a slip fails before reaching the log.
            if cfg!(debug_assertions) {
                let mut scratch = state.clone();
                for e in &tx.events {
                    scratch.apply(e).map_err(StoreError::from)?;
                }
            }
            value
        };
        let at = tx.now();
        let commit = Commit {
            seq: w.commits + 1,
            at,
            events: tx.events,
        };
        let frame = codec::encode_record(&commit).map_err(StoreError::from)?;
        match &mut w.sink {
            Sink::Memory(buf) => buf.extend_from_slice(&frame),
            Sink::Disk { log, .. } => {
                log.write_all(&frame).map_err(StoreError::from)?;
                if w.options.sync {
                    log.sync_data().map_err(StoreError::from)?;
                }
            }
        }
        w.commits += 1;
        w.since_snapshot += 1;
        {
            let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
            for e in &commit.events {
                state.apply(e).expect("committed event must apply");
            }
        }
        if w.since_snapshot >= w.options.snapshot_every {
            if let Err(e) = self.snapshot_locked(w) {
                tracing::error!(error = %e, "snapshot failed; continuing on the current log");
            }
        }
        Ok(value)
    }

    /// Writes a snapshot and starts a new log generation.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let mut w = self.lock_writer();
        self.snapshot_locked(&mut w)
    }

    fn snapshot_locked(&self, w: &mut Writer) -> Result<(), StoreError> {
        let Sink::Disk {
            dir,
            log,
            generation,
            ..
        } = &mut w.sink
        else {
            w.since_snapshot = 0;
            return Ok(());
        };
        let next = *generation + 1;
        let mut buf = codec::encode_record(&SnapshotHeader::Header {
            generation: next,
            commits: w.commits,
        })?;
        for entity in self.read().entities() {
            buf.extend(codec::encode_record(&entity)?);
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&*dir)?;
        tmp.write_all(&buf)?;
        tmp.as_file().sync_all()?;
        tmp.persist(snapshot_path(dir, next)).map_err(|e| e.error)?;
        let new_log = OpenOptions::new()
            .create(true)
            .truncate(true)
            .write(true)
            .open(log_path(dir, next))?;
        new_log.sync_all()?;
        sync_dir(dir)?;
        let old = *generation;
        *log = OpenOptions::new().append(true).open(log_path(dir, next))?;
        *generation = next;
        w.since_snapshot = 0;
        let _ = fs::remove_file(log_path(dir, old));
        if old > 0 {
            let _ = fs::remove_file(snapshot_path(dir, old));
        }
        Ok(())
    }

    /// Raw log bytes of an in-memory store, or of the current log generation.
    pub fn log_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let w = self.lock_writer();
        match &w.sink {
            Sink::Memory(buf) => Ok(buf.clone()),
            Sink::Disk {
                dir, generation, ..
            } => Ok(fs::read(log_path(dir, *generation))?),
        }
    }

    /// Canonical JSON of every entity, for whole-store comparisons.
    pub fn fingerprint(&self) -> Vec<u8> {
        codec::canonical_json(&self.read().entities()).expect("entities serialize")
    }
}
