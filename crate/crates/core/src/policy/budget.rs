//! Spend ledger with rolling day/week and calendar-month totals.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::constants::{DAY_MS, WEEK_MS};
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpendRecord {
    pub timestamp: i64,
    pub amount: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetTotals {
    pub day: u128,
    pub week: u128,
    pub month: u128,
}

/// Append-only spend history per agent plus first-payment markers per
/// `(agent, policy)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BudgetLedger {
    spends: BTreeMap<AgentId, Vec<SpendRecord>>,
    paid: BTreeSet<(AgentId, Uuid)>,
}

/// `(year, month)` of a millisecond timestamp in UTC.
pub fn utc_month(ts_ms: i64) -> (i32, u32) {
    let dt = DateTime::from_timestamp_millis(ts_ms).expect("timestamp within chrono range");
    (dt.year(), dt.month())
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_spend(&mut self, agent: &AgentId, amount: u64, timestamp: i64) {
        self.spends
            .entry(agent.clone())
            .or_default()
            .push(SpendRecord { timestamp, amount });
    }

    pub fn records(&self, agent: &AgentId) -> &[SpendRecord] {
        self.spends.get(agent).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Day covers `(now - 24h, now]`, week `(now - 7d, now]`, month every
    /// record in the UTC calendar month containing `now`.
    pub fn rolling_totals(&self, agent: &AgentId, now: i64) -> BudgetTotals {
        let month = utc_month(now);
        let mut t = BudgetTotals::default();
        for r in self.records(agent) {
            let amount = u128::from(r.amount);
            if r.timestamp <= now {
                if r.timestamp > now - DAY_MS {
                    t.day += amount;
                }
                if r.timestamp > now - WEEK_MS {
                    t.week += amount;
                }
            }
            if utc_month(r.timestamp) == month {
                t.month += amount;
            }
        }
        t
    }

    /// Marks a successful (executed) payment under `policy`.
    pub fn mark_paid(&mut self, agent: &AgentId, policy: Uuid) {
        self.paid.insert((agent.clone(), policy));
    }

    pub fn has_prior_payment(&self, agent: &AgentId, policy: Uuid) -> bool {
        self.paid.contains(&(agent.clone(), policy))
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.spends.keys()
    }
}
