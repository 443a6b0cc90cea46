//! Baseline gates B0–B3 and the full configuration with escalation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use aesp_core::crypto::SeededRandom;
use aesp_core::policy::{CheckId, PolicyDecision, PolicyEngine};
use aesp_core::review::{
    ReviewQueue, ReviewResponse, ReviewVerdict, Tier, Urgency, ViolationReason,
};
use aesp_core::storage::InMemoryStorage;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateId {
    B0,
    B1,
    B2,
    B3,
    #[serde(rename = "FULL")]
    Full,
}

impl GateId {
    pub const ALL: [GateId; 5] = [GateId::B0, GateId::B1, GateId::B2, GateId::B3, GateId::Full];

    pub fn config(self) -> GateConfig {
        let checks: BTreeSet<CheckId> = match self {
            GateId::B0 => BTreeSet::new(),
            GateId::B1 => [CheckId::AmountPerTx].into(),
            GateId::B2 => [CheckId::AmountPerTx, CheckId::TimeWindow].into(),
            GateId::B3 | GateId::Full => CheckId::all(),
        };
        GateConfig {
            id: self,
            enabled_checks: checks,
            escalation_enabled: self == GateId::Full,
        }
    }
}

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateId::B0 => "B0",
            GateId::B1 => "B1",
            GateId::B2 => "B2",
            GateId::B3 => "B3",
            GateId::Full => "FULL",
        })
    }
}

impl FromStr for GateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "B0" => Ok(GateId::B0),
            "B1" => Ok(GateId::B1),
            "B2" => Ok(GateId::B2),
            "B3" => Ok(GateId::B3),
            "FULL" => Ok(GateId::Full),
            _ => Err(format!("unknown gate config {s:?} (expected B0, B1, B2, B3 or FULL)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateConfig {
    pub id: GateId,
    pub enabled_checks: BTreeSet<CheckId>,
    pub escalation_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanPolicy {
    ApproveAll,
    RejectAll,
    /// Rejects escalated attacks, approves escalated legitimate requests.
    Optimal,
}

impl FromStr for HumanPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approve_all" => Ok(HumanPolicy::ApproveAll),
            "reject_all" => Ok(HumanPolicy::RejectAll),
            "optimal" => Ok(HumanPolicy::Optimal),
            _ => Err(format!("unknown human policy {s:?}")),
        }
    }
}

impl HumanPolicy {
    fn approves(self, label: Label) -> bool {
        match self {
            HumanPolicy::ApproveAll => true,
            HumanPolicy::RejectAll => false,
            HumanPolicy::Optimal => !label.is_attack(),
        }
    }
}

/// What happened to one corpus request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// The gate approved it.
    AutoApproved,
    /// The gate rejected it and it was dropped.
    Blocked,
    /// The gate rejected it; a human approved it afterwards.
    EscalatedApproved,
    /// The gate rejected it; a human rejected it afterwards.
    EscalatedRejected,
}

impl Disposition {
    pub fn gate_rejected(self) -> bool {
        self != Disposition::AutoApproved
    }

    pub fn escalated(self) -> bool {
        matches!(self, Disposition::EscalatedApproved | Disposition::EscalatedRejected)
    }

    pub fn executed(self) -> bool {
        matches!(self, Disposition::AutoApproved | Disposition::EscalatedApproved)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub index: usize,
    pub label: Label,
    pub stratum: Option<CheckId>,
    pub disposition: Disposition,
    pub first_failed_check: Option<CheckId>,
    pub failed_checks: Vec<CheckId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub auto_blocked: usize,
    pub escalated: usize,
    pub passed: usize,
    pub executed: usize,
}

impl Counts {
    fn add(&mut self, d: Disposition) {
        self.total += 1;
        if d.gate_rejected() {
            self.auto_blocked += 1;
        } else {
            self.passed += 1;
        }
        if d.escalated() {
            self.escalated += 1;
        }
        if d.executed() {
            self.executed += 1;
        }
    }
}

/// Security metrics for one gate run.
///
/// `auto_blocked` counts attacks the gate itself refused, so
/// `auto_blocked + passed = total` in every configuration. With escalation
/// on, refused requests are also routed to the human and counted in
/// `escalated`; the human's verdict decides `executed`, not `auto_blocked`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub config: GateId,
    pub human: Option<HumanPolicy>,
    pub attacks: Counts,
    pub legitimate: Counts,
    pub auto_blocked_rate: f64,
    pub escalation_load_rate: f64,
    pub false_positive_rate: f64,
    /// Attack executions including human approvals, as a fraction of attacks.
    pub attack_execution_rate: f64,
    /// First failing check per blocked attack, keyed by check number.
    pub per_check_attribution: BTreeMap<u8, usize>,
    /// First failing check per legitimate request not auto-approved.
    pub legitimate_attribution: BTreeMap<u8, usize>,
    /// Keys "1".."8" for single-condition strata and "aggregate".
    pub per_stratum: BTreeMap<String, Counts>,
}

#[derive(Debug, Clone)]
pub struct GateRun {
    pub report: SecurityReport,
    pub outcomes: Vec<RequestOutcome>,
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn stratum_key(label: Label, stratum: Option<CheckId>) -> Option<String> {
    match (label, stratum) {
        (Label::AttackSingle, Some(s)) => Some(s.number().to_string()),
        (Label::AttackAggregate, _) => Some("aggregate".into()),
        _ => None,
    }
}

/// Replays the corpus in order through the gate. Approved spends (automatic
/// or human) are recorded and mark the first payment under their policy.
pub fn run_gate(config: &GateConfig, corpus: &Corpus, human: HumanPolicy) -> GateRun {
    run_checks(config.id, &config.enabled_checks, config.escalation_enabled, corpus, human)
}

pub(crate) fn run_checks(
    id: GateId,
    checks: &BTreeSet<CheckId>,
    escalation: bool,
    corpus: &Corpus,
    human: HumanPolicy,
) -> GateRun {
    let engine = PolicyEngine::with_checks(checks.iter().copied());
    let policies = corpus.policy_map();
    let mut ledger = corpus.initial_ledger();
    let queue = escalation.then(|| {
        ReviewQueue::with_rng(Arc::new(InMemoryStorage::new()), Arc::new(SeededRandom::new(corpus.seed)))
            .expect("in-memory storage never fails")
    });
    let empty = Vec::new();
    let mut outcomes = Vec::with_capacity(corpus.requests.len());

    for (index, cr) in corpus.requests.iter().enumerate() {
        let r = &cr.request;
        let now = r.timestamp;
        let agent_policies = policies.get(&r.agent_id).unwrap_or(&empty);
        let decision: PolicyDecision = engine.evaluate(r, agent_policies, &ledger, now);
        let disposition = if decision.is_approved() {
            Disposition::AutoApproved
        } else if let Some(q) = &queue {
            let reasons = decision
                .all_failed_checks()
                .into_iter()
                .map(ViolationReason::Check)
                .collect();
            let handle = q
                .submit(r.clone(), reasons, Urgency::Normal, Tier::Review, now)
                .expect("corpus agents are never frozen");
            let verdict = if human.approves(cr.label) {
                ReviewVerdict::Approve
            } else {
                ReviewVerdict::Reject
            };
            let resp = ReviewResponse {
                request_id: handle.request_id,
                verdict,
                modified_action: None,
                biometric_confirmed: false,
                responder: "simulated-human".into(),
                timestamp: now,
            };
            q.respond(handle.request_id, resp, now).expect("fresh request accepts a response");
            if verdict == ReviewVerdict::Approve {
                Disposition::EscalatedApproved
            } else {
                Disposition::EscalatedRejected
            }
        } else {
            Disposition::Blocked
        };

        if disposition.executed() {
            ledger.record_spend(&r.agent_id, r.amount, now);
            let policy = decision
                .matched_policy_id
                .or_else(|| decision.failed_checks.first().map(|f| f.policy_id));
            if let Some(p) = policy {
                ledger.mark_paid(&r.agent_id, p);
            }
        }
        outcomes.push(RequestOutcome {
            index,
            label: cr.label,
            stratum: cr.stratum,
            disposition,
            first_failed_check: decision.first_failed_check(),
            failed_checks: decision.all_failed_checks().into_iter().collect(),
        });
    }

    GateRun {
        report: summarize(id, escalation.then_some(human), &outcomes),
        outcomes,
    }
}

pub fn summarize(id: GateId, human: Option<HumanPolicy>, outcomes: &[RequestOutcome]) -> SecurityReport {
    let mut attacks = Counts::default();
    let mut legitimate = Counts::default();
    let mut per_check = BTreeMap::new();
    let mut legit_attr = BTreeMap::new();
    let mut per_stratum: BTreeMap<String, Counts> = BTreeMap::new();
    for o in outcomes {
        if o.label.is_attack() {
            attacks.add(o.disposition);
            if let Some(k) = stratum_key(o.label, o.stratum) {
                per_stratum.entry(k).or_default().add(o.disposition);
            }
            if o.disposition.gate_rejected() {
                if let Some(c) = o.first_failed_check {
                    *per_check.entry(c.number()).or_insert(0) += 1;
                }
            }
        } else {
            legitimate.add(o.disposition);
            if o.disposition.gate_rejected() {
                if let Some(c) = o.first_failed_check {
                    *legit_attr.entry(c.number()).or_insert(0) += 1;
                }
            }
        }
    }
    SecurityReport {
        config: id,
        human,
        auto_blocked_rate: rate(attacks.auto_blocked, attacks.total),
        escalation_load_rate: rate(attacks.escalated, attacks.total),
        false_positive_rate: rate(legitimate.total - legitimate.passed, legitimate.total),
        attack_execution_rate: rate(attacks.executed, attacks.total),
        attacks,
        legitimate,
        per_check_attribution: per_check,
        legitimate_attribution: legit_attr,
        per_stratum,
    }
}

/// All five configurations on one corpus.
pub fn run_all(corpus: &Corpus, human: HumanPolicy) -> Vec<SecurityReport> {
    GateId::ALL
        .iter()
        .map(|g| run_gate(&g.config(), corpus, human).report)
        .collect()
}
