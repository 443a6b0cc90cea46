//! Context strings, privacy levels, consolidation scheduling and audit tags.

mod audit;
mod pool;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{INTER_BATCH_DELAY_MAX_MS, INTER_BATCH_DELAY_MIN_MS};
use crate::crypto::{
    address_for, derive_contextual_keypair, Address, ChainNamespace, CryptoError, IdentityRoot,
};
use crate::identity::AgentId;

pub use audit::{
    audit_key, create_tag, open_tag, ArchiveSink, ArchiveStrategy, ArchivedTag, Archiver,
    ContextTag, JsonlFileSink, MemorySink, TagRecord,
};
pub use pool::{AddressStatus, EphemeralAddressRecord, PoolConfig, PoolCounts, PoolManager};

#[derive(Debug, Error, PartialEq)]
pub enum PrivacyError {
    #[error("context segments are empty")]
    EmptyContext,
    #[error("context value for {key:?} contains ':' or is empty: {value:?}")]
    InvalidSegment { key: String, value: String },
    #[error("isolated level requires a transaction id")]
    MissingTxId,
    #[error("jitter ratio must be in [0, 1), got {0}")]
    InvalidJitter(f64),
    #[error("no address pool for this agent, chain and direction")]
    PoolNotInitialized,
    #[error("address pool exhausted")]
    PoolExhausted,
    #[error("unknown pooled address {0}")]
    UnknownAddress(String),
    #[error("invalid address status transition {from:?} -> {to:?}")]
    InvalidStatusTransition {
        from: AddressStatus,
        to: AddressStatus,
    },
    #[error("batch size must be positive")]
    InvalidBatchSize,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Inbound,
    Outbound,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Inbound => "inbound",
            Direction::Outbound => "outbound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyLevel {
    Transparent,
    Basic,
    Isolated,
}

/// Key/value segments of a derivation context. Rendering sorts them, so
/// insertion order never matters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextSegments(BTreeMap<String, String>);

impl ContextSegments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: ToString, V: ToString> FromIterator<(K, V)> for ContextSegments {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(
            iter.into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

/// Renders each segment as `key:value`, sorts the rendered strings, joins
/// them with `:` and appends a trailing `:`.
pub fn build_context(segments: &ContextSegments) -> Result<String, PrivacyError> {
    if segments.is_empty() {
        return Err(PrivacyError::EmptyContext);
    }
    let mut rendered = Vec::with_capacity(segments.0.len());
    for (k, v) in &segments.0 {
        for part in [k, v] {
            if part.is_empty() || part.contains(':') {
                return Err(PrivacyError::InvalidSegment {
                    key: k.clone(),
                    value: v.clone(),
                });
            }
        }
        rendered.push(format!("{k}:{v}"));
    }
    rendered.sort();
    let mut out = rendered.join(":");
    out.push(':');
    Ok(out)
}

/// Derivation context for an address at the given level.
pub fn address_context(
    level: PrivacyLevel,
    agent_id: &AgentId,
    dir: Direction,
    tx_id: Option<&str>,
    seq: Option<u64>,
) -> Result<String, PrivacyError> {
    let base = ContextSegments::new().with("agent", agent_id);
    let segments = match level {
        PrivacyLevel::Transparent => base,
        PrivacyLevel::Basic => base.with("dir", dir.as_str()).with("mode", "basic"),
        PrivacyLevel::Isolated => base
            .with("dir", dir.as_str())
            .with("seq", seq.unwrap_or(0))
            .with("tx", tx_id.ok_or(PrivacyError::MissingTxId)?),
    };
    build_context(&segments)
}

/// Derives the address an agent uses on `chain` at the given privacy level.
/// Transparent yields the agent's vault address.
pub fn derive_address(
    root: &IdentityRoot,
    level: PrivacyLevel,
    agent_id: &AgentId,
    dir: Direction,
    chain: &str,
    tx_id: Option<&str>,
    seq: Option<u64>,
) -> Result<Address, PrivacyError> {
    let ctx = address_context(level, agent_id, dir, tx_id, seq)?;
    address_at(root, ChainNamespace::for_chain(chain), &ctx)
}

pub(crate) fn address_at(
    root: &IdentityRoot,
    ns: ChainNamespace,
    ctx: &str,
) -> Result<Address, PrivacyError> {
    let kp = derive_contextual_keypair(root, ns.curve(), ctx)?;
    Ok(address_for(&kp, ns)?)
}

/// `base · (1 − ρ + 2ρr)`, rounded and kept inside `[(1−ρ)·base, (1+ρ)·base)`.
pub fn next_consolidation_delay(base_ms: u64, jitter_ratio: f64, r: f64) -> Result<u64, PrivacyError> {
    if !(0.0..1.0).contains(&jitter_ratio) {
        return Err(PrivacyError::InvalidJitter(jitter_ratio));
    }
    let r = r.clamp(0.0, 1.0);
    let base = base_ms as f64;
    let lo = base * (1.0 - jitter_ratio);
    let hi = base * (1.0 + jitter_ratio);
    let t = (lo + (hi - lo) * r).round();
    let min = lo.ceil();
    let max = if hi > lo { (hi.ceil() - 1.0).max(min) } else { min };
    Ok(t.clamp(min, max) as u64)
}

/// In-place Fisher-Yates: for i = n−1 down to 1, swap a[i] with a[j], j uniform in [0, i].
pub fn fisher_yates_shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidationPlan {
    pub batches: Vec<Vec<Address>>,
    /// Delay before each batch after the first.
    pub inter_batch_delays_ms: Vec<u64>,
    pub scheduled_at: i64,
}

impl ConsolidationPlan {
    /// Offset of each batch from `scheduled_at`.
    pub fn batch_times(&self) -> Vec<i64> {
        let mut t = self.scheduled_at;
        let mut out = Vec::with_capacity(self.batches.len());
        for (i, _) in self.batches.iter().enumerate() {
            if i > 0 {
                t += self.inter_batch_delays_ms[i - 1] as i64;
            }
            out.push(t);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Shuffles `addresses`, chunks them into batches of at most `batch_size`
/// and draws a uniform inter-batch delay for each gap.
pub fn plan_consolidation<R: Rng + ?Sized>(
    addresses: &[Address],
    batch_size: usize,
    rng: &mut R,
    now: i64,
) -> Result<ConsolidationPlan, PrivacyError> {
    if batch_size == 0 {
        return Err(PrivacyError::InvalidBatchSize);
    }
    let mut shuffled = addresses.to_vec();
    fisher_yates_shuffle(&mut shuffled, rng);
    let batches: Vec<Vec<Address>> = shuffled.chunks(batch_size).map(<[_]>::to_vec).collect();
    let inter_batch_delays_ms = (1..batches.len())
        .map(|_| rng.gen_range(INTER_BATCH_DELAY_MIN_MS..=INTER_BATCH_DELAY_MAX_MS))
        .collect();
    Ok(ConsolidationPlan {
        batches,
        inter_batch_delays_ms,
        scheduled_at: now,
    })
}
