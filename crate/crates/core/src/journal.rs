//! Append-only record journal with JSON snapshots.
//!
//! A journal directory holds `journal.log`, a sequence of frames each made of
//! a 4-byte big-endian length followed by one UTF-8 JSON record, and zero or
//! more `snapshot-<seq>.json` files. A snapshot captures state after record
//! `seq`; recovery loads the newest snapshot and replays the records after it.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const JOURNAL_FILE: &str = "journal.log";
const MAX_FRAME: u32 = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("journal record {seq} is corrupt: {message}")]
    Corrupt { seq: u64, message: String },
    #[error("journal encoding error: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    pub kind: String,
    pub payload: Value,
}

/// What was found on disk when the journal was opened.
#[derive(Debug, Default)]
pub struct Recovered {
    pub snapshot: Option<(u64, Value)>,
    /// Records newer than the snapshot, in order.
    pub records: Vec<Record>,
    /// Bytes discarded from a torn final frame.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct Journal {
    dir: PathBuf,
    file: File,
    next_seq: u64,
    since_snapshot: u64,
    sync: bool,
}

impl Journal {
    /// Opens or creates the journal in `dir`, cutting off an incomplete tail
    /// frame left by a crash mid-append.
    pub fn open(dir: &Path) -> Result<(Journal, Recovered), JournalError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let file = OpenOptions::new().create(true).truncate(false).read(true).append(true).open(&path)?;
        let len = file.metadata()?.len();

        let mut all = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(File::open(&path)?);
        loop {
            let mut header = [0u8; 4];
            match read_full(&mut reader, &mut header)? {
                0 => break,
                4 => {}
                _ => break,
            }
            let frame_len = u32::from_be_bytes(header);
            if frame_len > MAX_FRAME {
                break;
            }
            let mut body = vec![0u8; frame_len as usize];
            if read_full(&mut reader, &mut body)? < body.len() {
                break;
            }
            let record: Record = match serde_json::from_slice(&body) {
                Ok(r) => r,
                // a garbled final frame is a torn write; anything after it
                // means the file was damaged in place
                Err(e) if good_len + 4 + u64::from(frame_len) < len => {
                    return Err(JournalError::Corrupt {
                        seq: all.last().map_or(1, |r: &Record| r.seq + 1),
                        message: e.to_string(),
                    })
                }
                Err(_) => break,
            };
            let expected = all.last().map_or(1, |r: &Record| r.seq + 1);
            if record.seq != expected {
                return Err(JournalError::Corrupt {
                    seq: record.seq,
                    message: format!("expected sequence number {expected}"),
                });
            }
            good_len += 4 + u64::from(frame_len);
            all.push(record);
        }
        let truncated_bytes = len - good_len;
        if truncated_bytes > 0 {
            log::warn!("discarding {truncated_bytes} bytes of torn journal tail in {}", path.display());
            file.set_len(good_len)?;
        }

        let snapshot = latest_snapshot(dir)?;
        let last_seq = all.last().map_or(0, |r| r.seq);
        if let Some((seq, _)) = &snapshot {
            if *seq > last_seq {
                return Err(JournalError::Corrupt {
                    seq: *seq,
                    message: "snapshot is newer than the journal".into(),
                });
            }
        }
        let snap_seq = snapshot.as_ref().map_or(0, |(s, _)| *s);
        let records: Vec<Record> = all.into_iter().filter(|r| r.seq > snap_seq).collect();
        let journal = Journal {
            dir: dir.to_path_buf(),
            file,
            next_seq: last_seq + 1,
            since_snapshot: records.len() as u64,
            sync: true,
        };
        Ok((
            journal,
            Recovered {
                snapshot,
                records,
                truncated_bytes,
            },
        ))
    }

    /// Disables fsync after each append. Only sensible for tests.
    pub fn set_sync(&mut self, sync: bool) {
        self.sync = sync;
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn records_since_snapshot(&self) -> u64 {
        self.since_snapshot
    }

    pub fn append(&mut self, ts: DateTime<Utc>, kind: &str, payload: Value) -> Result<u64, JournalError> {
        let record = Record {
            seq: self.next_seq,
            ts,
            kind: kind.to_owned(),
            payload,
        };
        let body = serde_json::to_vec(&record)?;
        let mut frame = Vec::with_capacity(body.len() + 4);
        frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
        frame.extend_from_slice(&body);
        self.file.write_all(&frame)?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.next_seq += 1;
        self.since_snapshot += 1;
        Ok(record.seq)
    }

    /// Writes `snapshot-<last seq>.json` atomically and removes older ones.
    pub fn write_snapshot(&mut self, state: &Value) -> Result<u64, JournalError> {
        let seq = self.last_seq();
        let final_path = self.dir.join(format!("snapshot-{seq}.json"));
        let tmp = self.dir.join(format!("snapshot-{seq}.json.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(state)?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &final_path)?;
        for (old, path) in snapshot_files(&self.dir)? {
            if old < seq {
                fs::remove_file(path)?;
            }
        }
        self.since_snapshot = 0;
        Ok(seq)
    }
}

/// Reads every record in the journal file, ignoring snapshots.
pub fn read_all(dir: &Path) -> Result<Vec<Record>, JournalError> {
    let mut bytes = Vec::new();
    match File::open(dir.join(JOURNAL_FILE)) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    }
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos + 4 <= bytes.len() {
        let n = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        if pos + 4 + n > bytes.len() {
            break;
        }
        match serde_json::from_slice(&bytes[pos + 4..pos + 4 + n]) {
            Ok(r) => out.push(r),
            Err(_) => break,
        }
        pos += 4 + n;
    }
    Ok(out)
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn snapshot_files(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(seq) = name
            .strip_prefix("snapshot-")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((seq, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn latest_snapshot(dir: &Path) -> Result<Option<(u64, Value)>, JournalError> {
    let Some((seq, path)) = snapshot_files(dir)?.pop() else {
        return Ok(None);
    };
    let value = serde_json::from_slice(&fs::read(&path)?).map_err(|e| JournalError::Corrupt {
        seq,
        message: format!("unreadable snapshot: {e}"),
    })?;
    Ok(Some((seq, value)))
}
