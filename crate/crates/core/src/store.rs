//! Persistent PMID-keyed annotation cache.
//!
//! On-disk layout: the magic bytes `BANN1`, then a sequence of records, each a
//! little-endian `u32` payload length, a little-endian `u32` CRC32 of the
//! payload, and the payload itself (canonical JSON of a [`CacheRecord`]).
//! The log is append-only; the latest record for a PMID wins. An in-memory
//! PMID → offset map is rebuilt at open. A torn or corrupt tail is dropped at
//! open, so the readable prefix is always consistent.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{is_valid_pmid, validate_result, AnnotationPayload};

pub const STORE_MAGIC: &[u8; 5] = b"BANN1";
const HEADER_LEN: u64 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("invalid cache record: {0}")]
    InvalidRecord(String),
    #[error("store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("store I/O failure: {0}")]
    IoFailure(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::IoFailure(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub pmid: String,
    /// Canonical JSON of the annotation payload (no timing).
    pub payload: String,
    pub pipeline_version: String,
    pub stored_at: DateTime<Utc>,
}

impl CacheRecord {
    pub fn new(pmid: impl Into<String>, payload: &AnnotationPayload) -> Self {
        Self {
            pmid: pmid.into(),
            payload: payload.to_canonical_json(),
            pipeline_version: payload.pipeline_version.clone(),
            stored_at: Utc::now(),
        }
    }

    pub fn decode_payload(&self) -> Result<AnnotationPayload, StoreError> {
        serde_json::from_str(&self.payload)
            .map_err(|e| StoreError::StoreCorrupt(format!("payload for {}: {e}", self.pmid)))
    }

    fn validate(&self) -> Result<(), StoreError> {
        if !is_valid_pmid(&self.pmid) {
            return Err(StoreError::InvalidRecord(format!("pmid {:?} is not numeric", self.pmid)));
        }
        if self.pipeline_version.is_empty() {
            return Err(StoreError::InvalidRecord("empty pipeline version".into()));
        }
        let payload: AnnotationPayload = serde_json::from_str(&self.payload)
            .map_err(|e| StoreError::InvalidRecord(format!("payload does not parse: {e}")))?;
        let violations = validate_result(&payload.into_result(0.0));
        if let Some(v) = violations.first() {
            return Err(StoreError::InvalidRecord(format!("payload invalid: {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompactStats {
    pub records_kept: usize,
    pub bytes_before: u64,
    pub bytes_after: u64,
}

impl CompactStats {
    pub fn bytes_reclaimed(&self) -> u64 {
        self.bytes_before.saturating_sub(self.bytes_after)
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    offset: u64,
    len: u32,
    crc: u32,
}

#[derive(Debug)]
struct State {
    file: File,
    index: HashMap<String, Slot>,
    end: u64,
}

/// File-backed append-only annotation cache.
///
/// Readers share a lock and use positioned reads; writers and compaction take
/// it exclusively.
#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    state: RwLock<State>,
}

fn encode_record(record: &CacheRecord) -> Vec<u8> {
    let payload = serde_json::to_vec(record).expect("cache records always serialize");
    let mut buf = Vec::with_capacity(payload.len() + HEADER_LEN as usize);
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    buf.extend_from_slice(&payload);
    buf
}

/// Scans a log image, returning the PMID index and the end of the valid prefix.
fn scan(bytes: &[u8]) -> (HashMap<String, Slot>, u64) {
    let mut index = HashMap::new();
    let mut pos = STORE_MAGIC.len();
    loop {
        if pos == bytes.len() {
            break;
        }
        if pos + HEADER_LEN as usize > bytes.len() {
            log::warn!("annotation store: torn record header at byte {pos}, dropping tail");
            break;
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let start = pos + HEADER_LEN as usize;
        let Some(end) = start.checked_add(len as usize).filter(|&e| e <= bytes.len()) else {
            log::warn!("annotation store: torn record at byte {pos}, dropping tail");
            break;
        };
        let payload = &bytes[start..end];
        if crc32fast::hash(payload) != crc {
            log::warn!("annotation store: checksum mismatch at byte {pos}, dropping tail");
            break;
        }
        match serde_json::from_slice::<CacheRecord>(payload) {
            Ok(r) => {
                index.insert(
                    r.pmid,
                    Slot {
                        offset: start as u64,
                        len,
                        crc,
                    },
                );
            }
            Err(e) => {
                log::warn!("annotation store: unreadable record at byte {pos} ({e}), dropping tail");
                break;
            }
        }
        pos = end;
    }
    (index, pos as u64)
}

impl AnnotationStore {
    /// Opens or creates the log at `path`, recovering from a torn tail.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        if bytes.len() < STORE_MAGIC.len() {
            if !STORE_MAGIC.starts_with(&bytes) {
                return Err(StoreError::StoreCorrupt(format!("{} is not an annotation store", path.display())));
            }
            // empty or torn inside the magic
            file.set_len(0)?;
            file.write_all_at(STORE_MAGIC, 0)?;
            file.sync_all()?;
            bytes = STORE_MAGIC.to_vec();
        } else if &bytes[..STORE_MAGIC.len()] != STORE_MAGIC {
            return Err(StoreError::StoreCorrupt(format!("{} is not an annotation store", path.display())));
        }

        let (index, end) = scan(&bytes);
        if end < bytes.len() as u64 {
            file.set_len(end)?;
            file.sync_all()?;
        }
        Ok(Self {
            path,
            state: RwLock::new(State { file, index, end }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of distinct PMIDs stored.
    pub fn len(&self) -> usize {
        self.state.read().expect("store lock").index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size of the log file in bytes.
    pub fn log_bytes(&self) -> u64 {
        self.state.read().expect("store lock").end
    }

    pub fn pmids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.state.read().expect("store lock").index.keys().cloned().collect();
        v.sort();
        v
    }

    /// Latest committed record for `pmid`.
    pub fn get(&self, pmid: &str) -> Result<Option<CacheRecord>, StoreError> {
        let state = self.state.read().expect("store lock");
        let Some(slot) = state.index.get(pmid).copied() else {
            return Ok(None);
        };
        let mut buf = vec![0u8; slot.len as usize];
        state.file.read_exact_at(&mut buf, slot.offset)?;
        drop(state);
        if crc32fast::hash(&buf) != slot.crc {
            return Err(StoreError::StoreCorrupt(format!("checksum mismatch for pmid {pmid}")));
        }
        let record: CacheRecord = serde_json::from_slice(&buf)
            .map_err(|e| StoreError::StoreCorrupt(format!("record for pmid {pmid}: {e}")))?;
        Ok(Some(record))
    }

    /// Appends `record` and flushes it to disk before returning.
    pub fn put(&self, record: &CacheRecord) -> Result<(), StoreError> {
        record.validate()?;
        let buf = encode_record(record);
        let mut state = self.state.write().expect("store lock");
        let offset = state.end;
        state.file.write_all_at(&buf, offset)?;
        state.file.sync_data()?;
        state.end = offset + buf.len() as u64;
        state.index.insert(
            record.pmid.clone(),
            Slot {
                offset: offset + HEADER_LEN,
                len: (buf.len() as u64 - HEADER_LEN) as u32,
                crc: u32::from_le_bytes(buf[4..8].try_into().unwrap()),
            },
        );
        Ok(())
    }

    /// Rewrites the log keeping only the latest record per PMID.
    ///
    /// The new log is written beside the old one and renamed over it; on
    /// failure the original file is untouched.
    pub fn compact(&self) -> Result<CompactStats, StoreError> {
        self.compact_inner(None)
    }

    /// Compaction that fails after writing `after_records` records, leaving
    /// the temporary file behind. Used to exercise crash recovery.
    #[doc(hidden)]
    pub fn compact_interrupted(&self, after_records: usize) -> Result<CompactStats, StoreError> {
        self.compact_inner(Some(after_records))
    }

    fn compact_inner(&self, fail_after: Option<usize>) -> Result<CompactStats, StoreError> {
        let mut state = self.state.write().expect("store lock");
        let bytes_before = state.end;
        let tmp_path = self.path.with_extension("compact.tmp");

        let ordered: BTreeMap<&String, Slot> = state.index.iter().map(|(k, v)| (k, *v)).collect();
        let mut out = Vec::with_capacity(bytes_before as usize);
        out.extend_from_slice(STORE_MAGIC);
        let mut tmp = File::create(&tmp_path)?;
        for (written, (_, slot)) in ordered.iter().enumerate() {
            if fail_after == Some(written) {
                tmp.write_all(&out)?;
                return Err(StoreError::IoFailure("compaction interrupted".into()));
            }
            let mut payload = vec![0u8; slot.len as usize];
            state.file.read_exact_at(&mut payload, slot.offset)?;
            out.extend_from_slice(&slot.len.to_le_bytes());
            out.extend_from_slice(&slot.crc.to_le_bytes());
            out.extend_from_slice(&payload);
        }
        tmp.write_all(&out)?;
        tmp.sync_all()?;
        drop(tmp);
        fs::rename(&tmp_path, &self.path)?;
        if let Some(dir) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }

        let file = OpenOptions::new().read(true).write(true).open(&self.path)?;
        let (index, end) = scan(&out);
        let records_kept = index.len();
        *state = State { file, index, end };
        Ok(CompactStats {
            records_kept,
            bytes_before,
            bytes_after: end,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnnotationResult, Document};

    fn record(pmid: &str, text: &str, version: &str) -> CacheRecord {
        let r = AnnotationResult {
            doc: Document::new(Some(pmid.to_string()), text).unwrap(),
            annotations: vec![],
            elapsed_ms: 0.0,
            pipeline_version: version.into(),
        };
        CacheRecord::new(pmid, &r.payload())
    }

    #[test]
    fn empty_store_and_read_your_write() {
        let dir = tempfile::tempdir().unwrap();
        let store = AnnotationStore::open(dir.path().join("c.log")).unwrap();
        assert_eq!(store.get("1").unwrap(), None);
        let r = record("1", "abc", "v1");
        store.put(&r).unwrap();
        assert_eq!(store.get("1").unwrap(), Some(r));
    }

    #[test]
    fn latest_wins_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        {
            let store = AnnotationStore::open(&path).unwrap();
            store.put(&record("1", "first", "v1")).unwrap();
            store.put(&record("1", "second", "v1")).unwrap();
            assert_eq!(store.get("1").unwrap().unwrap().decode_payload().unwrap().doc.text, "second");
        }
        let store = AnnotationStore::open(&path).unwrap();
        assert_eq!(store.get("1").unwrap().unwrap().decode_payload().unwrap().doc.text, "second");
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn rejects_invalid_records_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let store = AnnotationStore::open(dir.path().join("c.log")).unwrap();
        let before = store.log_bytes();
        let mut r = record("1", "x", "v1");
        r.pmid = "PMC9".into();
        assert!(matches!(store.put(&r), Err(StoreError::InvalidRecord(_))));
        let mut r = record("1", "x", "v1");
        r.payload = "{not json".into();
        assert!(matches!(store.put(&r), Err(StoreError::InvalidRecord(_))));
        assert_eq!(store.log_bytes(), before);
    }

    #[test]
    fn compaction_drops_old_versions() {
        let dir = tempfile::tempdir().unwrap();
        let store = AnnotationStore::open(dir.path().join("c.log")).unwrap();
        for text in ["a", "bb", "ccc"] {
            store.put(&record("7", text, "v1")).unwrap();
        }
        store.put(&record("8", "z", "v1")).unwrap();
        let stats = store.compact().unwrap();
        assert_eq!(stats.records_kept, 2);
        assert!(stats.bytes_reclaimed() > 0);
        assert_eq!(store.get("7").unwrap().unwrap().decode_payload().unwrap().doc.text, "ccc");

        let again = store.compact().unwrap();
        assert_eq!(again.bytes_reclaimed(), 0);
        assert_eq!(store.get("8").unwrap().unwrap().decode_payload().unwrap().doc.text, "z");
    }

    #[test]
    fn interrupted_compaction_preserves_original() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        let store = AnnotationStore::open(&path).unwrap();
        store.put(&record("1", "a", "v1")).unwrap();
        store.put(&record("1", "b", "v1")).unwrap();
        store.put(&record("2", "c", "v1")).unwrap();
        let original = fs::read(&path).unwrap();
        assert!(store.compact_interrupted(1).is_err());
        assert_eq!(fs::read(&path).unwrap(), original);
        assert_eq!(store.get("1").unwrap().unwrap().decode_payload().unwrap().doc.text, "b");
        drop(store);
        let reopened = AnnotationStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
    }

    #[test]
    fn foreign_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.log");
        fs::write(&path, b"hello world").unwrap();
        assert!(matches!(AnnotationStore::open(&path), Err(StoreError::StoreCorrupt(_))));
    }
}
