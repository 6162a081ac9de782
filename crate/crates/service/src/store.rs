//! Append-only JSONL event log with periodic snapshots.
//!
//! `events.jsonl` holds every event ever accepted and is never rewritten,
//! except that a torn final line left by a crash mid-write is cut off on
//! open. `snapshot.json` caches the replayed state up to some sequence number
//! and is replaced atomically.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{apply, Event, SessionError, Sessions};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },
    #[error(transparent)]
    Replay(#[from] SessionError),
    #[error("event seq {found} out of order (expected {expected})")]
    Sequence { expected: u64, found: u64 },
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    seq: u64,
    sessions: Sessions,
}

pub struct EventLog {
    dir: PathBuf,
    file: File,
    seq: u64,
    snapshot_every: u64,
    durable: bool,
}

/// State rebuilt from disk.
pub struct Replayed {
    pub sessions: Sessions,
    /// Events read from the log after the snapshot.
    pub events_replayed: usize,
    pub truncated_tail: bool,
}

impl EventLog {
    /// Opens (creating if needed) the log in `dir` and replays it.
    pub fn open(dir: impl AsRef<Path>, snapshot_every: u64, durable: bool) -> Result<(Self, Replayed), StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let (mut sessions, mut seq) = read_snapshot(&dir)?;
        let path = dir.join(EVENTS_FILE);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| io(&path, e))?;

        let scan = {
            let mut reader = BufReader::new(&mut file);
            reader.seek(SeekFrom::Start(0)).map_err(|e| io(&path, e))?;
            scan_events(reader, &path, &mut sessions, seq)?
        };
        let truncated_tail = scan.torn;
        let events_replayed = scan.replayed;
        let good_len = scan.good_len;
        seq = scan.seq;
        if truncated_tail {
            tracing::warn!(path = %path.display(), "dropping torn final line of event log");
            file.set_len(good_len).map_err(|e| io(&path, e))?;
        }
        let log = EventLog {
            dir,
            file,
            seq,
            snapshot_every,
            durable,
        };
        Ok((
            log,
            Replayed {
                sessions,
                events_replayed,
                truncated_tail,
            },
        ))
    }

    /// Sequence number of the last event written.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn next_seq(&self) -> u64 {
        self.seq + 1
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes one event. The caller applies it to in-memory state only after
    /// this returns, so memory never runs ahead of disk.
    pub fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        if event.seq != self.seq + 1 {
            return Err(StoreError::Sequence {
                expected: self.seq + 1,
                found: event.seq,
            });
        }
        let path = self.dir.join(EVENTS_FILE);
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| io(&path, e))?;
        if self.durable {
            self.file.sync_data().map_err(|e| io(&path, e))?;
        }
        self.seq = event.seq;
        Ok(())
    }

    /// Writes a snapshot if the configured interval has elapsed.
    pub fn maybe_snapshot(&mut self, sessions: &Sessions) -> Result<bool, StoreError> {
        if self.snapshot_every == 0 || !self.seq.is_multiple_of(self.snapshot_every) {
            return Ok(false);
        }
        self.snapshot(sessions)?;
        Ok(true)
    }

    pub fn snapshot(&mut self, sessions: &Sessions) -> Result<(), StoreError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let snap = Snapshot {
            format_version: SNAPSHOT_VERSION,
            seq: self.seq,
            sessions: sessions.clone(),
        };
        let bytes = serde_json::to_vec(&snap).expect("snapshot serializes");
        let mut f = File::create(&tmp).map_err(|e| io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| io(&tmp, e))?;
        if self.durable {
            f.sync_all().map_err(|e| io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| io(&path, e))?;
        Ok(())
    }
}

fn read_snapshot(dir: &Path) -> Result<(Sessions, u64), StoreError> {
    let path = dir.join(SNAPSHOT_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Sessions::new(), 0)),
        Err(e) => return Err(io(&path, e)),
    };
    let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| StoreError::Snapshot {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if snap.format_version != SNAPSHOT_VERSION {
        return Err(StoreError::Snapshot {
            path,
            reason: format!("unsupported format version {}", snap.format_version),
        });
    }
    Ok((snap.sessions, snap.seq))
}

/// Replays a log directory without opening it for writing.
pub fn replay_dir(dir: impl AsRef<Path>) -> Result<Sessions, StoreError> {
    let dir = dir.as_ref();
    let (mut sessions, seq) = read_snapshot(dir)?;
    let path = dir.join(EVENTS_FILE);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(sessions),
        Err(e) => return Err(io(&path, e)),
    };
    scan_events(BufReader::new(file), &path, &mut sessions, seq)?;
    Ok(sessions)
}

struct Scan {
    seq: u64,
    replayed: usize,
    good_len: u64,
    torn: bool,
}

/// Applies every event after `seq`. A final line without its newline is a
/// write that never completed and is reported as torn, not as corruption.
fn scan_events(mut reader: impl BufRead, path: &Path, sessions: &mut Sessions, mut seq: u64) -> Result<Scan, StoreError> {
    let mut scan = Scan {
        seq,
        replayed: 0,
        good_len: 0,
        torn: false,
    };
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.ends_with('\n') {
            scan.torn = true;
            break;
        }
        scan.good_len += n as u64;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Corrupt {
            line: line_no,
            reason: e.to_string(),
        })?;
        if event.seq <= seq {
            continue; // already folded into the snapshot
        }
        if event.seq != seq + 1 {
            return Err(StoreError::Sequence {
                expected: seq + 1,
                found: event.seq,
            });
        }
        apply(sessions, &event)?;
        seq = event.seq;
        scan.replayed += 1;
    }
    scan.seq = seq;
    Ok(scan)
}

fn io(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}
