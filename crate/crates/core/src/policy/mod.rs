//! The eight-check policy gate.
//!
//! Each active policy is checked independently; the first policy that passes
//! every enabled check approves the request (OR semantics). Every failing
//! check of every evaluated policy is recorded so that callers can attribute
//! a rejection to a specific condition.

mod budget;
mod classify;

pub use budget::{utc_month, BudgetLedger, BudgetTotals, SpendRecord};
pub use classify::{
    classify_change, ChangeType, ClassifyError, PolicyChange, PolicyChangeReport, RequiredApproval,
};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

use crate::constants::{
    DAY_MS, SCOPE_RANK_AUTO_PAYMENT, SCOPE_RANK_COMMITMENT, SCOPE_RANK_FULL,
    SCOPE_RANK_NEGOTIATION,
};
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AutoPayment,
    Negotiation,
    Commitment,
    Full,
}

impl Scope {
    pub fn rank(self) -> u8 {
        match self {
            Scope::AutoPayment => SCOPE_RANK_AUTO_PAYMENT,
            Scope::Negotiation => SCOPE_RANK_NEGOTIATION,
            Scope::Commitment => SCOPE_RANK_COMMITMENT,
            Scope::Full => SCOPE_RANK_FULL,
        }
    }
}

/// Daily operating hours, `"HH:MM"` on both ends. `start > end` wraps past
/// midnight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow")]
pub struct TimeWindow {
    pub start: String,
    pub end: String,
}

#[derive(Deserialize)]
struct RawWindow {
    start: String,
    end: String,
}

impl TryFrom<RawWindow> for TimeWindow {
    type Error = String;
    fn try_from(raw: RawWindow) -> Result<Self, String> {
        TimeWindow::new(raw.start, raw.end)
    }
}

fn parse_hhmm(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then_some(h * 60 + m)
}

impl TimeWindow {
    pub fn new(start: impl Into<String>, end: impl Into<String>) -> Result<Self, String> {
        let (start, end) = (start.into(), end.into());
        for s in [&start, &end] {
            if parse_hhmm(s).is_none() {
                return Err(format!("invalid HH:MM time {s:?}"));
            }
        }
        Ok(Self { start, end })
    }

    pub fn start_minute(&self) -> u32 {
        parse_hhmm(&self.start).expect("validated on construction")
    }

    pub fn end_minute(&self) -> u32 {
        parse_hhmm(&self.end).expect("validated on construction")
    }
}

/// Whether `t_ms` falls inside `window` in local time `UTC + tz_offset_minutes`.
/// Both ends are inclusive at millisecond precision.
pub fn is_within_time_window(t_ms: i64, window: &TimeWindow, tz_offset_minutes: i32) -> bool {
    let local = (t_ms + i64::from(tz_offset_minutes) * 60_000).rem_euclid(DAY_MS);
    let start = i64::from(window.start_minute()) * 60_000;
    let end = i64::from(window.end_minute()) * 60_000;
    if start <= end {
        start <= local && local <= end
    } else {
        local >= start || local <= end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConditions {
    pub max_amount_per_tx: Option<u64>,
    pub max_amount_per_day: Option<u64>,
    pub max_amount_per_week: Option<u64>,
    pub max_amount_per_month: Option<u64>,
    pub allow_list_addresses: Vec<String>,
    pub allow_list_chains: Vec<String>,
    pub allow_list_methods: Vec<String>,
    pub time_window: Option<TimeWindow>,
    pub min_balance_after: u64,
    pub require_review_first_pay: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub id: Uuid,
    pub agent_id: AgentId,
    /// Hex ed25519 public key of the issuing principal.
    pub owner_xid: String,
    pub scope: Scope,
    pub conditions: PolicyConditions,
    pub created_at: i64,
    pub expires_at: i64,
}

impl Policy {
    /// Active on `[created_at, expires_at)`.
    pub fn is_active(&self, now: i64) -> bool {
        self.created_at <= now && now < self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub id: Uuid,
    pub agent_id: AgentId,
    pub amount: u64,
    pub to: String,
    pub chain: String,
    pub method: String,
    pub timestamp: i64,
    pub current_balance: u64,
}

/// Stable check identifiers, serialized as the integers 1..=8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum CheckId {
    AmountPerTx = 1,
    TimeWindow = 2,
    AddressAllowlist = 3,
    ChainAllowlist = 4,
    MethodAllowlist = 5,
    FirstPayment = 6,
    MinBalance = 7,
    Budget = 8,
}

impl CheckId {
    pub const ALL: [CheckId; 8] = [
        CheckId::AmountPerTx,
        CheckId::TimeWindow,
        CheckId::AddressAllowlist,
        CheckId::ChainAllowlist,
        CheckId::MethodAllowlist,
        CheckId::FirstPayment,
        CheckId::MinBalance,
        CheckId::Budget,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckId::AmountPerTx => "per_tx_amount",
            CheckId::TimeWindow => "time_window",
            CheckId::AddressAllowlist => "address_allowlist",
            CheckId::ChainAllowlist => "chain_allowlist",
            CheckId::MethodAllowlist => "method_allowlist",
            CheckId::FirstPayment => "first_payment",
            CheckId::MinBalance => "min_balance",
            CheckId::Budget => "budget",
        }
    }

    pub fn all() -> BTreeSet<CheckId> {
        Self::ALL.into_iter().collect()
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.number(), self.name())
    }
}

impl Serialize for CheckId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for CheckId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        CheckId::from_number(n)
            .ok_or_else(|| serde::de::Error::custom(format!("check id {n} outside 1..=8")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    ReviewRequired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyFailure {
    pub policy_id: Uuid,
    pub checks: Vec<CheckId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub verdict: Verdict,
    pub matched_policy_id: Option<Uuid>,
    pub failed_checks: Vec<PolicyFailure>,
}

impl PolicyDecision {
    pub fn is_approved(&self) -> bool {
        self.verdict == Verdict::Approved
    }

    /// The first failing check of the first evaluated policy.
    pub fn first_failed_check(&self) -> Option<CheckId> {
        self.failed_checks.first()?.checks.first().copied()
    }

    /// Union of failing checks across policies, ascending.
    pub fn all_failed_checks(&self) -> BTreeSet<CheckId> {
        self.failed_checks
            .iter()
            .flat_map(|f| f.checks.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEngineConfig {
    pub enabled_checks: BTreeSet<CheckId>,
    pub tz_offset_minutes: i32,
}

impl Default for PolicyEngineConfig {
    fn default() -> Self {
        Self {
            enabled_checks: CheckId::all(),
            tz_offset_minutes: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PolicyEngine {
    config: PolicyEngineConfig,
}

fn exceeds(total: u128, amount: u64, limit: Option<u64>) -> bool {
    limit.is_some_and(|l| total + u128::from(amount) > u128::from(l))
}

impl PolicyEngine {
    pub fn new(config: PolicyEngineConfig) -> Self {
        Self { config }
    }

    pub fn with_checks(checks: impl IntoIterator<Item = CheckId>) -> Self {
        Self::new(PolicyEngineConfig {
            enabled_checks: checks.into_iter().collect(),
            ..Default::default()
        })
    }

    pub fn config(&self) -> &PolicyEngineConfig {
        &self.config
    }

    /// Runs the enabled checks of every active policy until one passes.
    pub fn evaluate(
        &self,
        request: &ActionRequest,
        policies: &[Policy],
        ledger: &BudgetLedger,
        now: i64,
    ) -> PolicyDecision {
        let mut failed_checks = Vec::new();
        let mut totals: Option<BudgetTotals> = None;
        for policy in policies.iter().filter(|p| p.is_active(now)) {
            let checks: Vec<CheckId> = self
                .config
                .enabled_checks
                .iter()
                .copied()
                .filter(|&c| !self.check_passes(c, request, policy, ledger, now, &mut totals))
                .collect();
            if checks.is_empty() {
                return PolicyDecision {
                    verdict: Verdict::Approved,
                    matched_policy_id: Some(policy.id),
                    failed_checks,
                };
            }
            failed_checks.push(PolicyFailure {
                policy_id: policy.id,
                checks,
            });
        }
        PolicyDecision {
            verdict: Verdict::ReviewRequired,
            matched_policy_id: None,
            failed_checks,
        }
    }

    fn check_passes(
        &self,
        check: CheckId,
        r: &ActionRequest,
        policy: &Policy,
        ledger: &BudgetLedger,
        now: i64,
        totals: &mut Option<BudgetTotals>,
    ) -> bool {
        let k = &policy.conditions;
        match check {
            CheckId::AmountPerTx => k.max_amount_per_tx.is_none_or(|max| r.amount <= max),
            CheckId::TimeWindow => k.time_window.as_ref().is_none_or(|w| {
                is_within_time_window(r.timestamp, w, self.config.tz_offset_minutes)
            }),
            CheckId::AddressAllowlist => {
                k.allow_list_addresses.is_empty() || k.allow_list_addresses.contains(&r.to)
            }
            CheckId::ChainAllowlist => {
                k.allow_list_chains.is_empty() || k.allow_list_chains.contains(&r.chain)
            }
            CheckId::MethodAllowlist => {
                k.allow_list_methods.is_empty() || k.allow_list_methods.contains(&r.method)
            }
            CheckId::FirstPayment => {
                !k.require_review_first_pay || ledger.has_prior_payment(&r.agent_id, policy.id)
            }
            CheckId::MinBalance => {
                k.min_balance_after == 0
                    || i128::from(r.current_balance) - i128::from(r.amount)
                        >= i128::from(k.min_balance_after)
            }
            CheckId::Budget => {
                let t = *totals.get_or_insert_with(|| ledger.rolling_totals(&r.agent_id, now));
                !(exceeds(t.day, r.amount, k.max_amount_per_day)
                    || exceeds(t.week, r.amount, k.max_amount_per_week)
                    || exceeds(t.month, r.amount, k.max_amount_per_month))
            }
        }
    }
}
