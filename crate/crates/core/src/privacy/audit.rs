//! Encrypted context tags and their archival.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::constants::{AUDIT_BATCH_THRESHOLD, AUDIT_KEY_CONTEXT, AUDIT_TIME_WINDOW_MS};
use crate::crypto::{
    canonical_json, derive_symmetric_key, uuid_from, CryptoError, IdentityRoot, RandomSource,
    SealedBox, SymmetricKey,
};
use crate::identity::AgentId;

/// The owner's tag key, derived under `audit:tags:v1`.
pub fn audit_key(root: &IdentityRoot) -> SymmetricKey {
    derive_symmetric_key(root, AUDIT_KEY_CONTEXT).expect("audit context is non-empty")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRecord {
    pub tag_id: Uuid,
    pub agent_id: AgentId,
    pub policy_id: Option<Uuid>,
    pub commitment_id: Option<String>,
    pub ephemeral_address: String,
    pub tx_id: Option<Uuid>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub created_at: i64,
}

impl TagRecord {
    pub fn new(agent_id: AgentId, ephemeral_address: impl Into<String>, created_at: i64) -> Self {
        Self {
            tag_id: Uuid::nil(),
            agent_id,
            policy_id: None,
            commitment_id: None,
            ephemeral_address: ephemeral_address.into(),
            tx_id: None,
            metadata: BTreeMap::new(),
            created_at,
        }
    }
}

/// Plaintext fields plus the same fields sealed under the audit key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTag {
    #[serde(flatten)]
    pub record: TagRecord,
    pub ciphertext: SealedBox,
}

/// Assigns a fresh tag id (when nil) and seals the canonical JSON of the record.
pub fn create_tag(key: &SymmetricKey, mut record: TagRecord, rng: &dyn RandomSource) -> ContextTag {
    if record.tag_id.is_nil() {
        record.tag_id = uuid_from(rng);
    }
    let plain = canonical_json(&record).expect("tag record serializes");
    ContextTag {
        ciphertext: key.seal(&plain, rng),
        record,
    }
}

/// Decrypts a sealed tag.
pub fn open_tag(key: &SymmetricKey, sealed: &SealedBox) -> Result<TagRecord, CryptoError> {
    let plain = key.open(sealed)?;
    serde_json::from_slice(&plain).map_err(|e| CryptoError::Malformed(e.to_string()))
}

/// What leaves the process: only the tag id, its time and the ciphertext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchivedTag {
    pub tag_id: Uuid,
    pub created_at: i64,
    pub ciphertext: SealedBox,
}

impl From<&ContextTag> for ArchivedTag {
    fn from(t: &ContextTag) -> Self {
        Self {
            tag_id: t.record.tag_id,
            created_at: t.record.created_at,
            ciphertext: t.ciphertext.clone(),
        }
    }
}

pub trait ArchiveSink: Send + Sync {
    fn append(&self, batch: &[ArchivedTag]) -> io::Result<()>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    batches: Mutex<Vec<Vec<ArchivedTag>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn batches(&self) -> Vec<Vec<ArchivedTag>> {
        self.batches.lock().clone()
    }
}

impl ArchiveSink for MemorySink {
    fn append(&self, batch: &[ArchivedTag]) -> io::Result<()> {
        self.batches.lock().push(batch.to_vec());
        Ok(())
    }
}

/// One JSON line per batch in `audit-YYYY-MM-DD.jsonl`, dated by the
/// batch's first tag (UTC).
#[derive(Debug)]
pub struct JsonlFileSink {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl JsonlFileSink {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            lock: Mutex::new(()),
        })
    }

    pub fn file_for(&self, ts_ms: i64) -> PathBuf {
        let day = chrono::DateTime::from_timestamp_millis(ts_ms)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_else(|| "invalid-date".into());
        self.dir.join(format!("audit-{day}.jsonl"))
    }

    /// Reads every archived batch in the directory, oldest file first.
    pub fn read_all(&self) -> io::Result<Vec<Vec<ArchivedTag>>> {
        let mut files: Vec<_> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            for line in fs::read_to_string(f)?.lines().filter(|l| !l.is_empty()) {
                out.push(serde_json::from_str(line).map_err(io::Error::other)?);
            }
        }
        Ok(out)
    }
}

impl ArchiveSink for JsonlFileSink {
    fn append(&self, batch: &[ArchivedTag]) -> io::Result<()> {
        let Some(first) = batch.first() else {
            return Ok(());
        };
        let _guard = self.lock.lock();
        let mut line = serde_json::to_vec(batch).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.file_for(first.created_at))?;
        f.write_all(&line)?;
        f.sync_data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ArchiveStrategy {
    Immediate,
    TimeWindow { window_ms: i64 },
    CountThreshold { threshold: usize },
}

impl ArchiveStrategy {
    pub fn time_window() -> Self {
        ArchiveStrategy::TimeWindow {
            window_ms: AUDIT_TIME_WINDOW_MS,
        }
    }

    pub fn count_threshold() -> Self {
        ArchiveStrategy::CountThreshold {
            threshold: AUDIT_BATCH_THRESHOLD,
        }
    }
}

#[derive(Default)]
struct Pending {
    tags: Vec<ArchivedTag>,
    first_at: Option<i64>,
}

/// Buffers tags and hands them to the sink according to the strategy.
pub struct Archiver {
    strategy: ArchiveStrategy,
    sink: Arc<dyn ArchiveSink>,
    pending: Mutex<Pending>,
}

impl std::fmt::Debug for Archiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Archiver")
            .field("strategy", &self.strategy)
            .field("pending", &self.pending.lock().tags.len())
            .finish()
    }
}

impl Archiver {
    pub fn new(strategy: ArchiveStrategy, sink: Arc<dyn ArchiveSink>) -> Self {
        Self {
            strategy,
            sink,
            pending: Mutex::new(Pending::default()),
        }
    }

    pub fn strategy(&self) -> ArchiveStrategy {
        self.strategy
    }

    pub fn pending(&self) -> usize {
        self.pending.lock().tags.len()
    }

    /// Queues a tag. Returns the number of batches written.
    pub fn submit(&self, tag: &ContextTag, now: i64) -> io::Result<usize> {
        let mut p = self.pending.lock();
        p.first_at.get_or_insert(now);
        p.tags.push(tag.into());
        let due = match self.strategy {
            ArchiveStrategy::Immediate => true,
            ArchiveStrategy::CountThreshold { threshold } => p.tags.len() >= threshold,
            ArchiveStrategy::TimeWindow { window_ms } => {
                p.first_at.is_some_and(|t| now >= t + window_ms)
            }
        };
        if due {
            self.flush_locked(&mut p)
        } else {
            Ok(0)
        }
    }

    /// Flushes a time-window batch whose window has closed.
    pub fn sweep(&self, now: i64) -> io::Result<usize> {
        let mut p = self.pending.lock();
        match (self.strategy, p.first_at) {
            (ArchiveStrategy::TimeWindow { window_ms }, Some(t)) if now >= t + window_ms => {
                self.flush_locked(&mut p)
            }
            _ => Ok(0),
        }
    }

    /// Writes whatever is pending regardless of strategy.
    pub fn flush(&self) -> io::Result<usize> {
        let mut p = self.pending.lock();
        self.flush_locked(&mut p)
    }

    fn flush_locked(&self, p: &mut Pending) -> io::Result<usize> {
        if p.tags.is_empty() {
            return Ok(0);
        }
        // Tags stay pending if the sink fails.
        self.sink.append(&p.tags)?;
        p.tags.clear();
        p.first_at = None;
        Ok(1)
    }
}
