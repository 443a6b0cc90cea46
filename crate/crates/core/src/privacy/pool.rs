//! Pre-derived ephemeral address pools.
//!
//! Each (agent, chain, direction) triple owns a pool. Records are derived
//! under `{agent, dir, pool:pre, seq:n}` with `n` increasing forever, so a
//! claimed address is never re-derived. The transaction a claimed address
//! serves is recorded on the record and in the audit tag.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{address_at, build_context, plan_consolidation, ConsolidationPlan, ContextSegments, Direction, PrivacyError};
use crate::constants::ADDRESS_POOL_SIZE;
use crate::crypto::{Address, ChainNamespace, IdentityRoot};
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressStatus {
    Pooled,
    Claimed,
    Spent,
    Consolidated,
}

impl AddressStatus {
    fn next(self) -> Option<AddressStatus> {
        match self {
            AddressStatus::Pooled => Some(AddressStatus::Claimed),
            AddressStatus::Claimed => Some(AddressStatus::Spent),
            AddressStatus::Spent => Some(AddressStatus::Consolidated),
            AddressStatus::Consolidated => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EphemeralAddressRecord {
    pub address: Address,
    pub chain_namespace: ChainNamespace,
    pub context_string: String,
    pub derived_at: i64,
    pub status: AddressStatus,
    pub claimed_tx: Option<Uuid>,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PoolCounts {
    pub pooled: usize,
    pub claimed: usize,
    pub spent: usize,
    pub consolidated: usize,
    pub total_derived: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PoolConfig {
    pub size: usize,
    /// Refill immediately after every claim.
    pub auto_replenish: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            size: ADDRESS_POOL_SIZE,
            auto_replenish: true,
        }
    }
}

type Triple = (AgentId, String, Direction);

#[derive(Debug, Default)]
struct Pool {
    records: Vec<EphemeralAddressRecord>,
    next_seq: u64,
}

impl Pool {
    fn pooled(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == AddressStatus::Pooled)
            .count()
    }
}

pub struct PoolManager {
    root: IdentityRoot,
    config: PoolConfig,
    pools: Mutex<HashMap<Triple, Arc<Mutex<Pool>>>>,
}

impl std::fmt::Debug for PoolManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoolManager")
            .field("config", &self.config)
            .field("pools", &self.pools.lock().len())
            .finish_non_exhaustive()
    }
}

impl PoolManager {
    pub fn new(root: IdentityRoot, config: PoolConfig) -> Self {
        Self {
            root,
            config,
            pools: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> PoolConfig {
        self.config
    }

    fn key(agent: &AgentId, chain: &str, dir: Direction) -> Triple {
        (agent.clone(), chain.to_string(), dir)
    }

    fn pool(&self, agent: &AgentId, chain: &str, dir: Direction) -> Result<Arc<Mutex<Pool>>, PrivacyError> {
        self.pools
            .lock()
            .get(&Self::key(agent, chain, dir))
            .cloned()
            .ok_or(PrivacyError::PoolNotInitialized)
    }

    /// Creates the pool for a triple (if needed) and fills it. Returns the
    /// number of records derived.
    pub fn init_pool(&self, agent: &AgentId, chain: &str, dir: Direction, now: i64) -> Result<usize, PrivacyError> {
        let pool = self
            .pools
            .lock()
            .entry(Self::key(agent, chain, dir))
            .or_default()
            .clone();
        let mut guard = pool.lock();
        self.fill(&mut guard, agent, chain, dir, now)
    }

    pub fn pool_replenish(&self, agent: &AgentId, chain: &str, dir: Direction, now: i64) -> Result<usize, PrivacyError> {
        let pool = self.pool(agent, chain, dir)?;
        let mut guard = pool.lock();
        self.fill(&mut guard, agent, chain, dir, now)
    }

    fn fill(&self, pool: &mut Pool, agent: &AgentId, chain: &str, dir: Direction, now: i64) -> Result<usize, PrivacyError> {
        let ns = ChainNamespace::for_chain(chain);
        let mut n = 0;
        while pool.pooled() < self.config.size {
            let seq = pool.next_seq;
            let ctx = build_context(
                &ContextSegments::new()
                    .with("agent", agent)
                    .with("dir", dir.as_str())
                    .with("pool", "pre")
                    .with("seq", seq),
            )?;
            let address = address_at(&self.root, ns, &ctx)?;
            pool.records.push(EphemeralAddressRecord {
                address,
                chain_namespace: ns,
                context_string: ctx,
                derived_at: now,
                status: AddressStatus::Pooled,
                claimed_tx: None,
                seq,
            });
            pool.next_seq += 1;
            n += 1;
        }
        Ok(n)
    }

    /// Claims the oldest pooled address for `tx_id`.
    pub fn pool_claim(
        &self,
        agent: &AgentId,
        chain: &str,
        dir: Direction,
        tx_id: Uuid,
        now: i64,
    ) -> Result<EphemeralAddressRecord, PrivacyError> {
        let pool = self.pool(agent, chain, dir)?;
        let mut guard = pool.lock();
        let rec = guard
            .records
            .iter_mut()
            .find(|r| r.status == AddressStatus::Pooled)
            .ok_or(PrivacyError::PoolExhausted)?;
        rec.status = AddressStatus::Claimed;
        rec.claimed_tx = Some(tx_id);
        let claimed = rec.clone();
        if self.config.auto_replenish {
            self.fill(&mut guard, agent, chain, dir, now)?;
        }
        Ok(claimed)
    }

    fn set_status(
        &self,
        agent: &AgentId,
        chain: &str,
        dir: Direction,
        address: &Address,
        to: AddressStatus,
    ) -> Result<(), PrivacyError> {
        let pool = self.pool(agent, chain, dir)?;
        let mut guard = pool.lock();
        let rec = guard
            .records
            .iter_mut()
            .find(|r| &r.address == address)
            .ok_or_else(|| PrivacyError::UnknownAddress(address.to_string()))?;
        if rec.status.next() != Some(to) {
            return Err(PrivacyError::InvalidStatusTransition { from: rec.status, to });
        }
        rec.status = to;
        Ok(())
    }

    pub fn mark_spent(&self, agent: &AgentId, chain: &str, dir: Direction, address: &Address) -> Result<(), PrivacyError> {
        self.set_status(agent, chain, dir, address, AddressStatus::Spent)
    }

    pub fn counts(&self, agent: &AgentId, chain: &str, dir: Direction) -> Result<PoolCounts, PrivacyError> {
        let pool = self.pool(agent, chain, dir)?;
        let guard = pool.lock();
        let mut c = PoolCounts {
            total_derived: guard.records.len(),
            ..PoolCounts::default()
        };
        for r in &guard.records {
            match r.status {
                AddressStatus::Pooled => c.pooled += 1,
                AddressStatus::Claimed => c.claimed += 1,
                AddressStatus::Spent => c.spent += 1,
                AddressStatus::Consolidated => c.consolidated += 1,
            }
        }
        Ok(c)
    }

    pub fn records(&self, agent: &AgentId, chain: &str, dir: Direction) -> Result<Vec<EphemeralAddressRecord>, PrivacyError> {
        Ok(self.pool(agent, chain, dir)?.lock().records.clone())
    }

    /// Plans consolidation of every spent address of the triple.
    pub fn plan_consolidation<R: Rng + ?Sized>(
        &self,
        agent: &AgentId,
        chain: &str,
        dir: Direction,
        batch_size: usize,
        rng: &mut R,
        now: i64,
    ) -> Result<ConsolidationPlan, PrivacyError> {
        let spent: Vec<Address> = self
            .pool(agent, chain, dir)?
            .lock()
            .records
            .iter()
            .filter(|r| r.status == AddressStatus::Spent)
            .map(|r| r.address.clone())
            .collect();
        plan_consolidation(&spent, batch_size, rng, now)
    }

    /// Marks every planned address consolidated, batch by batch. All
    /// addresses are checked before any is changed.
    pub fn execute_plan(
        &self,
        agent: &AgentId,
        chain: &str,
        dir: Direction,
        plan: &ConsolidationPlan,
    ) -> Result<usize, PrivacyError> {
        let pool = self.pool(agent, chain, dir)?;
        let mut guard = pool.lock();
        let mut idx = Vec::with_capacity(plan.len());
        for addr in plan.batches.iter().flatten() {
            let i = guard
                .records
                .iter()
                .position(|r| &r.address == addr)
                .ok_or_else(|| PrivacyError::UnknownAddress(addr.to_string()))?;
            let from = guard.records[i].status;
            if from != AddressStatus::Spent || idx.contains(&i) {
                return Err(PrivacyError::InvalidStatusTransition {
                    from,
                    to: AddressStatus::Consolidated,
                });
            }
            idx.push(i);
        }
        for &i in &idx {
            guard.records[i].status = AddressStatus::Consolidated;
        }
        Ok(idx.len())
    }
}
