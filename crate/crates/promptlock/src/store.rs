//! Crash-safe persistence for listings, tokens, the purchase ledger, and
//! the issuer registry.
//!
//! On-disk format: a single append-only log file (`log.dat`) of framed
//! records. Each frame is
//!
//! ```text
//! u32le body_len | u32le crc32c(body) | body
//! ```
//!
//! where `body` is the canonical key-sorted JSON of a [`Record`]. Recovery
//! replays frames from the start and truncates at the first torn or
//! checksum-failing frame, so a crash mid-append leaves a prefix-consistent
//! state. Per-key versions strictly increase on every successful write;
//! [`Store::compare_and_swap`] commits only when the caller's expected
//! version matches, which serializes all state transitions built on top.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crc::Crc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const CRC32C: Crc<u32> = Crc::<u32>::new(&crc::CRC_32_ISCSI);
const LOG_FILE: &str = "log.dat";
const MAX_FRAME: u32 = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("version conflict: current version is {current}")]
    Conflict { current: u64 },
    #[error("store corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Listing,
    Token,
    LedgerEntry,
    IssuerEntry,
}

/// One committed key/value state. `payload` is canonical key-sorted JSON
/// produced by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub key: String,
    pub kind: RecordKind,
    pub payload: String,
    pub version: u64,
}

/// Whether every commit is fsynced before returning. `Fsync` is the
/// durability contract; `InMemoryFlush` trades it away for speed in tests
/// that stress logic rather than crash safety.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Durability {
    Fsync,
    InMemoryFlush,
}

struct Inner {
    file: File,
    index: HashMap<(RecordKind, String), Record>,
    ledger: Vec<String>,
    durability: Durability,
}

pub struct Store {
    path: PathBuf,
    inner: Mutex<Inner>,
}

fn encode_frame(record: &Record) -> Vec<u8> {
    let body = serde_json::to_vec(record).expect("record serialization cannot fail");
    let mut frame = Vec::with_capacity(body.len() + 8);
    frame.extend_from_slice(&(body.len() as u32).to_le_bytes());
    frame.extend_from_slice(&CRC32C.checksum(&body).to_le_bytes());
    frame.extend_from_slice(&body);
    frame
}

/// Replay a log image, returning the committed records and the byte offset
/// of the first torn or corrupt frame (== `data.len()` when clean).
fn replay(data: &[u8]) -> (Vec<Record>, usize) {
    let mut records = Vec::new();
    let mut offset = 0usize;
    loop {
        if data.len() - offset < 8 {
            break;
        }
        let len = u32::from_le_bytes(data[offset..offset + 4].try_into().unwrap());
        let crc = u32::from_le_bytes(data[offset + 4..offset + 8].try_into().unwrap());
        if len > MAX_FRAME {
            break;
        }
        let body_start = offset + 8;
        let body_end = body_start + len as usize;
        if body_end > data.len() {
            break;
        }
        let body = &data[body_start..body_end];
        if CRC32C.checksum(body) != crc {
            break;
        }
        let Ok(record) = serde_json::from_slice::<Record>(body) else {
            break;
        };
        records.push(record);
        offset = body_end;
    }
    (records, offset)
}

impl Store {
    /// Open (or create) the store in `dir`, replaying the log and
    /// truncating any torn tail left by a crash.
    pub fn open(dir: impl AsRef<Path>, durability: Durability) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir.as_ref())?;
        let path = dir.as_ref().join(LOG_FILE);
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .open(&path)?;
        let mut data = Vec::new();
        file.read_to_end(&mut data)?;
        let (records, committed) = replay(&data);
        if committed < data.len() {
            file.set_len(committed as u64)?;
            file.sync_data()?;
        }
        file.seek(SeekFrom::End(0))?;

        let mut index = HashMap::new();
        let mut ledger = Vec::new();
        for record in records {
            match record.kind {
                RecordKind::LedgerEntry => ledger.push(record.payload),
                _ => {
                    index.insert((record.kind, record.key.clone()), record);
                }
            }
        }
        Ok(Store {
            path,
            inner: Mutex::new(Inner {
                file,
                index,
                ledger,
                durability,
            }),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.path
    }

    /// Latest committed record, or `None` if the key was never written.
    pub fn get(&self, kind: RecordKind, key: &str) -> Option<Record> {
        let inner = self.inner.lock().unwrap();
        inner.index.get(&(kind, key.to_string())).cloned()
    }

    /// All committed records of a kind, in unspecified order.
    pub fn list(&self, kind: RecordKind) -> Vec<Record> {
        let inner = self.inner.lock().unwrap();
        inner
            .index
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|(_, r)| r.clone())
            .collect()
    }

    /// Commit `payload` iff the current version equals `expected_version`
    /// (0 for a key never written). Returns the new version; durable before
    /// return under [`Durability::Fsync`].
    pub fn compare_and_swap(
        &self,
        kind: RecordKind,
        key: &str,
        expected_version: u64,
        payload: &str,
    ) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let current = inner
            .index
            .get(&(kind, key.to_string()))
            .map(|r| r.version)
            .unwrap_or(0);
        if current != expected_version {
            return Err(StoreError::Conflict { current });
        }
        let record = Record {
            key: key.to_string(),
            kind,
            payload: payload.to_string(),
            version: current + 1,
        };
        inner.commit(&record)?;
        let version = record.version;
        inner.index.insert((kind, key.to_string()), record);
        Ok(version)
    }

    /// Append a ledger entry, returning its strictly increasing sequence
    /// number (1-based).
    pub fn append_ledger(&self, payload: &str) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let seq = inner.ledger.len() as u64 + 1;
        let record = Record {
            key: format!("{seq:020}"),
            kind: RecordKind::LedgerEntry,
            payload: payload.to_string(),
            version: 1,
        };
        inner.commit(&record)?;
        inner.ledger.push(record.payload);
        Ok(seq)
    }

    /// Ledger payloads in append order.
    pub fn ledger_entries(&self) -> Vec<String> {
        self.inner.lock().unwrap().ledger.clone()
    }

    pub fn ledger_len(&self) -> u64 {
        self.inner.lock().unwrap().ledger.len() as u64
    }

    /// Rewrite the log keeping only the latest version per key plus the
    /// full ledger, then atomically swap it in.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let tmp_path = self.path.with_extension("compact");
        let mut tmp = File::create(&tmp_path)?;
        let mut keys: Vec<_> = inner.index.keys().cloned().collect();
        keys.sort();
        for key in &keys {
            let record = &inner.index[key];
            tmp.write_all(&encode_frame(record))?;
        }
        for (i, payload) in inner.ledger.iter().enumerate() {
            let record = Record {
                key: format!("{:020}", i as u64 + 1),
                kind: RecordKind::LedgerEntry,
                payload: payload.clone(),
                version: 1,
            };
            tmp.write_all(&encode_frame(&record))?;
        }
        tmp.sync_data()?;
        std::fs::rename(&tmp_path, &self.path)?;
        let mut file = OpenOptions::new().read(true).write(true).open(&self.path)?;
        file.seek(SeekFrom::End(0))?;
        inner.file = file;
        Ok(())
    }
}

impl Inner {
    fn commit(&mut self, record: &Record) -> Result<(), StoreError> {
        self.file.write_all(&encode_frame(record))?;
        self.file.flush()?;
        if self.durability == Durability::Fsync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_tmp() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), Durability::Fsync).unwrap();
        (dir, store)
    }

    #[test]
    fn get_after_put() {
        let (_d, store) = open_tmp();
        store
            .compare_and_swap(RecordKind::Token, "t1", 0, r#"{"state":"issued"}"#)
            .unwrap();
        let r = store.get(RecordKind::Token, "t1").unwrap();
        assert_eq!(r.version, 1);
        assert_eq!(r.payload, r#"{"state":"issued"}"#);
    }

    #[test]
    fn get_of_unwritten_key_is_absent() {
        let (_d, store) = open_tmp();
        assert!(store.get(RecordKind::Listing, "nope").is_none());
    }

    #[test]
    fn cas_success_and_conflict() {
        let (_d, store) = open_tmp();
        let v1 = store
            .compare_and_swap(RecordKind::Token, "t", 0, "a")
            .unwrap();
        assert_eq!(v1, 1);
        let v2 = store
            .compare_and_swap(RecordKind::Token, "t", 1, "b")
            .unwrap();
        assert_eq!(v2, 2);
        match store.compare_and_swap(RecordKind::Token, "t", 1, "c") {
            Err(StoreError::Conflict { current: 2 }) => {}
            other => panic!("expected conflict at version 2, got {other:?}"),
        }
        assert_eq!(store.get(RecordKind::Token, "t").unwrap().payload, "b");
    }

    #[test]
    fn ledger_sequences_are_consecutive() {
        let (_d, store) = open_tmp();
        assert_eq!(store.append_ledger("one").unwrap(), 1);
        assert_eq!(store.append_ledger("two").unwrap(), 2);
        assert_eq!(store.ledger_entries(), vec!["one", "two"]);
    }

    #[test]
    fn reopen_replays_committed_state() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path(), Durability::Fsync).unwrap();
            store.compare_and_swap(RecordKind::Listing, "l", 0, "p1").unwrap();
            store.compare_and_swap(RecordKind::Listing, "l", 1, "p2").unwrap();
            store.append_ledger("e1").unwrap();
        }
        let store = Store::open(dir.path(), Durability::Fsync).unwrap();
        let r = store.get(RecordKind::Listing, "l").unwrap();
        assert_eq!((r.version, r.payload.as_str()), (2, "p2"));
        assert_eq!(store.ledger_entries(), vec!["e1"]);
    }

    #[test]
    fn torn_tail_is_truncated_on_recovery() {
        let dir = tempfile::tempdir().unwrap();
        let log = {
            let store = Store::open(dir.path(), Durability::Fsync).unwrap();
            store.compare_and_swap(RecordKind::Token, "t", 0, "full").unwrap();
            store.append_ledger("entry").unwrap();
            store.log_path().to_path_buf()
        };
        let mut data = std::fs::read(&log).unwrap();
        let cut = data.len() - 3; // tear the last frame
        data.truncate(cut);
        data.extend_from_slice(&[0xde, 0xad]);
        std::fs::write(&log, &data).unwrap();

        let store = Store::open(dir.path(), Durability::Fsync).unwrap();
        assert_eq!(store.get(RecordKind::Token, "t").unwrap().payload, "full");
        assert!(store.ledger_entries().is_empty());
        // recovered log accepts new appends
        assert_eq!(store.append_ledger("after-recovery").unwrap(), 1);
    }

    #[test]
    fn concurrent_cas_single_winner() {
        let (_d, store) = open_tmp();
        store.compare_and_swap(RecordKind::Token, "t", 0, "base").unwrap();
        let store = std::sync::Arc::new(store);
        let mut handles = Vec::new();
        for i in 0..8 {
            let store = store.clone();
            handles.push(std::thread::spawn(move || {
                store
                    .compare_and_swap(RecordKind::Token, "t", 1, &format!("w{i}"))
                    .is_ok()
            }));
        }
        let wins: usize = handles
            .into_iter()
            .map(|h| h.join().unwrap() as usize)
            .sum();
        assert_eq!(wins, 1);
    }

    #[test]
    fn compaction_preserves_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), Durability::Fsync).unwrap();
        for v in 0..10u64 {
            store
                .compare_and_swap(RecordKind::Listing, "l", v, &format!("v{}", v + 1))
                .unwrap();
        }
        store.append_ledger("keep").unwrap();
        store.compact().unwrap();
        store.compare_and_swap(RecordKind::Listing, "l", 10, "v11").unwrap();
        drop(store);
        let store = Store::open(dir.path(), Durability::Fsync).unwrap();
        let r = store.get(RecordKind::Listing, "l").unwrap();
        assert_eq!((r.version, r.payload.as_str()), (11, "v11"));
        assert_eq!(store.ledger_entries(), vec!["keep"]);
    }
}
