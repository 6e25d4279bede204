//! Kiosk outbox: reports queued offline, replayed to the server later.
//!
//! The file uses the registry's record framing. It is append-only; replaying
//! the records rebuilds the queue, so a kill between any two writes loses at
//! most the record being written.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_payload, encode_record, scan_frames, CodecError, ScanEnd};
use crate::sync::ReportPayload;

pub const DEFAULT_OUTBOX_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum OutboxError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("outbox holds {0} unsent reports, the configured maximum")]
    Full(usize),
    #[error("outbox {} is in use by another process", .0.display())]
    Locked(PathBuf),
    #[error("outbox {} is corrupt at byte offset {offset}", path.display())]
    Corrupt { path: PathBuf, offset: u64 },
    #[error("outbox {} does not exist; pass a kiosk id to create it", .0.display())]
    Missing(PathBuf),
    #[error("outbox belongs to kiosk {found:?}, not {wanted:?}")]
    WrongKiosk { found: String, wanted: String },
    #[error("outbox record {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        kiosk_id: String,
    },
    Queued {
        seq: u64,
        created_at: DateTime<Utc>,
        report: ReportPayload,
    },
    /// Every entry with `seq <= through` has been acknowledged.
    Sent {
        through: u64,
    },
    /// First contact with the server: it already holds seqs up to
    /// `high_water` for this kiosk, so queued entries move up by `shift`.
    FastForward {
        high_water: u64,
        shift: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboxEntry {
    pub seq: u64,
    pub created_at: DateTime<Utc>,
    pub report: ReportPayload,
    pub sent: bool,
}

#[derive(Debug)]
pub struct Outbox {
    path: PathBuf,
    file: File,
    kiosk_id: String,
    entries: Vec<OutboxEntry>,
    sent_through: u64,
    fast_forwarded: bool,
    cap: usize,
}

impl Outbox {
    /// Opens `path`, creating it for `kiosk_id` if it does not exist. The file
    /// stays locked until the outbox is dropped.
    pub fn open(
        path: impl AsRef<Path>,
        kiosk_id: Option<&str>,
        cap: usize,
    ) -> Result<Self, OutboxError> {
        let path = path.as_ref().to_path_buf();
        let exists = path.exists();
        if !exists && kiosk_id.is_none() {
            return Err(OutboxError::Missing(path));
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(&path)?;
        if file.try_lock().is_err() {
            return Err(OutboxError::Locked(path));
        }
        let bytes = std::fs::read(&path)?;
        let scan = scan_frames(&bytes);
        match scan.end {
            ScanEnd::Clean => {}
            ScanEnd::TornTail { offset } => {
                tracing::warn!(path = %path.display(), offset, "dropping incomplete final outbox record");
                file.set_len(offset)?;
                file.sync_all()?;
            }
            ScanEnd::Corrupt { offset } => return Err(OutboxError::Corrupt { path, offset }),
        }

        let mut outbox = Self {
            path,
            file,
            kiosk_id: String::new(),
            entries: Vec::new(),
            sent_through: 0,
            fast_forwarded: false,
            cap,
        };
        let records = scan
            .frames
            .iter()
            .map(|(offset, payload)| decode_payload::<Record>(*offset, payload))
            .collect::<Result<Vec<_>, _>>()?;
        if records.is_empty() {
            let id = kiosk_id.ok_or_else(|| OutboxError::Missing(outbox.path.clone()))?;
            if id.trim().is_empty() {
                return Err(OutboxError::Validation("kiosk id must not be empty".into()));
            }
            outbox.append(&Record::Header {
                kiosk_id: id.into(),
            })?;
            outbox.kiosk_id = id.into();
            return Ok(outbox);
        }
        for (i, r) in records.into_iter().enumerate() {
            outbox.apply(i, r)?;
        }
        if let Some(wanted) = kiosk_id {
            if wanted != outbox.kiosk_id {
                return Err(OutboxError::WrongKiosk {
                    found: outbox.kiosk_id.clone(),
                    wanted: wanted.into(),
                });
            }
        }
        Ok(outbox)
    }

    fn apply(&mut self, index: usize, r: Record) -> Result<(), OutboxError> {
        let bad = |m: &str| OutboxError::Inconsistent(format!("{index}: {m}"));
        match r {
            Record::Header { kiosk_id } if index == 0 => self.kiosk_id = kiosk_id,
            _ if index == 0 => return Err(bad("first record is not a header")),
            Record::Header { .. } => return Err(bad("repeated header")),
            Record::Queued {
                seq,
                created_at,
                report,
            } => {
                if seq != self.next_seq() {
                    return Err(bad("sequence gap"));
                }
                self.entries.push(OutboxEntry {
                    seq,
                    created_at,
                    report,
                    sent: false,
                });
            }
            Record::Sent { through } => self.mark(through).map_err(|m| bad(&m))?,
            Record::FastForward { high_water, shift } => {
                if self.fast_forwarded || self.sent_through > 0 {
                    return Err(bad("fast-forward after sync"));
                }
                self.shift(high_water, shift);
            }
        }
        Ok(())
    }

    fn mark(&mut self, through: u64) -> Result<(), String> {
        if through < self.sent_through {
            return Err("sent mark moves backwards".into());
        }
        if through >= self.next_seq() {
            return Err("sent mark past the last entry".into());
        }
        self.sent_through = through;
        for e in &mut self.entries {
            e.sent = e.seq <= through;
        }
        Ok(())
    }

    fn shift(&mut self, high_water: u64, shift: u64) {
        for e in &mut self.entries {
            e.seq += shift;
        }
        self.sent_through = high_water;
        self.fast_forwarded = true;
    }

    fn append(&mut self, r: &Record) -> Result<(), OutboxError> {
        let frame = encode_record(r)?;
        self.file.write_all(&frame)?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn kiosk_id(&self) -> &str {
        &self.kiosk_id
    }

    pub fn entries(&self) -> &[OutboxEntry] {
        &self.entries
    }

    pub fn pending(&self) -> &[OutboxEntry] {
        let start = self.entries.partition_point(|e| e.sent);
        &self.entries[start..]
    }

    pub fn sent_through(&self) -> u64 {
        self.sent_through
    }

    pub fn fast_forwarded(&self) -> bool {
        self.fast_forwarded
    }

    /// The seq the next queued report will get.
    pub fn next_seq(&self) -> u64 {
        self.entries.last().map_or(self.sent_through, |e| e.seq) + 1
    }

    /// Validates and durably appends a report, returning its seq.
    pub fn queue(
        &mut self,
        report: ReportPayload,
        created_at: DateTime<Utc>,
    ) -> Result<u64, OutboxError> {
        report.validate().map_err(OutboxError::Validation)?;
        let pending = self.pending().len();
        if pending >= self.cap {
            return Err(OutboxError::Full(pending));
        }
        let seq = self.next_seq();
        let record = Record::Queued {
            seq,
            created_at,
            report,
        };
        self.append(&record)?;
        let Record::Queued { report, .. } = record else {
            unreachable!()
        };
        self.entries.push(OutboxEntry {
            seq,
            created_at,
            report,
            sent: false,
        });
        Ok(seq)
    }

    /// Records that the server acknowledged everything up to `through`.
    pub fn mark_sent(&mut self, through: u64) -> Result<(), OutboxError> {
        if through == self.sent_through {
            return Ok(());
        }
        if through < self.sent_through || through >= self.next_seq() {
            return Err(OutboxError::Inconsistent(format!(
                "cannot mark {through} sent: sent through {}, next seq {}",
                self.sent_through,
                self.next_seq()
            )));
        }
        self.append(&Record::Sent { through })?;
        self.mark(through).map_err(OutboxError::Inconsistent)
    }

    /// Aligns local seqs with the server's high-water mark for this kiosk.
    /// Only valid before anything has been sent.
    pub fn fast_forward(&mut self, high_water: u64) -> Result<(), OutboxError> {
        if self.fast_forwarded || self.sent_through > 0 {
            return Err(OutboxError::Inconsistent(
                "outbox is already synchronised".into(),
            ));
        }
        let shift = high_water;
        self.append(&Record::FastForward { high_water, shift })?;
        self.shift(high_water, shift);
        Ok(())
    }
}
