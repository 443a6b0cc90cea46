//! The authorize pipeline: policy gate, human review, address derivation,
//! signed authorization and audit tagging.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use aesp_core::crypto::{
    canonical_json, derive_contextual_keypair, sign, uuid_from, verify, Curve, DerivedKeypair,
    IdentityRoot, OsRandom, RandomSource, SymmetricKey,
};
use aesp_core::identity::AgentId;
use aesp_core::policy::{
    classify_change, ActionRequest, BudgetLedger, BudgetTotals, Policy, PolicyChangeReport,
    PolicyDecision, PolicyEngine, PolicyEngineConfig, RequiredApproval,
};
use aesp_core::privacy::{
    audit_key, create_tag, derive_address, ArchiveSink, ArchiveStrategy, Archiver, Direction,
    MemorySink, PrivacyError, PrivacyLevel, TagRecord,
};
use aesp_core::review::{
    ReviewError, ReviewEvent, ReviewQueue, ReviewResponse, ReviewVerdict, Submission,
    Subscription, Tier, Urgency, ViolationReason,
};
use aesp_core::storage::{InMemoryStorage, StorageAdapter};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

/// Context of the key that signs authorizations.
pub const AUTHORIZATION_KEY_CONTEXT: &str = "gateway:authorization:";

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as i64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(t: i64) -> Self {
        Self(AtomicI64::new(t))
    }

    pub fn set(&self, t: i64) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) -> i64 {
        self.0.fetch_add(ms, Ordering::SeqCst) + ms
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorizeStatus {
    Executed,
    Rejected,
    Frozen,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizeOutcome {
    pub status: AuthorizeStatus,
    /// The action that was finally gated; differs from the submitted one
    /// after a modify verdict.
    pub action: ActionRequest,
    pub decision: PolicyDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_request_id: Option<Uuid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_id: Option<Uuid>,
    /// Hex ed25519 signature over the canonical `{action, decision_id}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ephemeral_address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_id: Option<Uuid>,
    /// The original action this one replaced through a modify verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_from: Option<Box<ActionRequest>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("AGENT_FROZEN: agent {0} is frozen")]
    AgentFrozen(AgentId),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("privacy: {0}")]
    Privacy(String),
    #[error("invalid policy change: {0}")]
    InvalidPolicyChange(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<PrivacyError> for GatewayError {
    fn from(e: PrivacyError) -> Self {
        GatewayError::Privacy(e.to_string())
    }
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::UnknownAgent(_) => "UNKNOWN_AGENT",
            GatewayError::AgentFrozen(_) => "AGENT_FROZEN",
            GatewayError::Review(e) => e.code(),
            GatewayError::Privacy(_) => "PRIVACY",
            GatewayError::InvalidPolicyChange(_) => "INVALID_POLICY_CHANGE",
            GatewayError::Storage(_) => "STORAGE",
        }
    }
}

/// The bytes an authorization signature covers.
pub fn authorization_message(action: &ActionRequest, decision_id: Uuid) -> Vec<u8> {
    #[derive(Serialize)]
    struct Body<'a> {
        action: &'a ActionRequest,
        decision_id: Uuid,
    }
    canonical_json(&Body { action, decision_id }).expect("action serializes")
}

/// One line of the outcome log, kept for the sovereignty audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub action_id: Uuid,
    pub agent_id: AgentId,
    pub status: AuthorizeStatus,
    pub policy_approved: bool,
    pub review_verdict: Option<ReviewVerdict>,
}

impl OutcomeRecord {
    /// Executed without an approving decision or an approving human.
    pub fn violates_sovereignty(&self) -> bool {
        self.status == AuthorizeStatus::Executed
            && !self.policy_approved
            && self.review_verdict != Some(ReviewVerdict::Approve)
    }
}

static EXECUTED_TOTAL: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS_TOTAL: AtomicU64 = AtomicU64::new(0);

/// Process-wide `(executed, violations)` across every gateway instance.
pub fn sovereignty_counters() -> (u64, u64) {
    (EXECUTED_TOTAL.load(Ordering::SeqCst), VIOLATIONS_TOTAL.load(Ordering::SeqCst))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum PolicyChangeOutcome {
    Accepted { report: PolicyChangeReport },
    Rejected { report: PolicyChangeReport, reason: String },
}

impl PolicyChangeOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, PolicyChangeOutcome::Accepted { .. })
    }
}

/// Decides a policy update from its classification and the human response.
pub fn apply_policy_change(
    old: &Policy,
    new: &Policy,
    response: Option<&ReviewResponse>,
) -> Result<PolicyChangeOutcome, GatewayError> {
    let report = classify_change(old, new).map_err(|e| GatewayError::InvalidPolicyChange(e.to_string()))?;
    let approved = response.is_some_and(|r| r.verdict == ReviewVerdict::Approve);
    let bio = response.is_some_and(|r| r.biometric_confirmed);
    let reason = match report.required_approval {
        RequiredApproval::None => None,
        RequiredApproval::Review if approved => None,
        RequiredApproval::Review => Some("review approval required"),
        RequiredApproval::Biometric if approved && bio => None,
        RequiredApproval::Biometric if approved => Some("tier violation: biometric confirmation required"),
        RequiredApproval::Biometric => Some("biometric approval required"),
    };
    Ok(match reason {
        None => PolicyChangeOutcome::Accepted { report },
        Some(r) => PolicyChangeOutcome::Rejected {
            report,
            reason: r.to_string(),
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: AgentId,
    pub frozen: bool,
    pub budget: BudgetTotals,
    pub limits: BudgetLimits,
    pub policies: usize,
}

/// The tightest limits across an agent's active policies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLimits {
    pub per_tx: Option<u64>,
    pub per_day: Option<u64>,
    pub per_week: Option<u64>,
    pub per_month: Option<u64>,
}

pub struct GatewayBuilder {
    root: IdentityRoot,
    storage: Arc<dyn StorageAdapter>,
    clock: Arc<dyn Clock>,
    rng: Arc<dyn RandomSource>,
    sink: Arc<dyn ArchiveSink>,
    archive: ArchiveStrategy,
    engine: PolicyEngineConfig,
    urgency: Urgency,
}

impl GatewayBuilder {
    pub fn storage(mut self, s: Arc<dyn StorageAdapter>) -> Self {
        self.storage = s;
        self
    }

    pub fn clock(mut self, c: Arc<dyn Clock>) -> Self {
        self.clock = c;
        self
    }

    pub fn rng(mut self, r: Arc<dyn RandomSource>) -> Self {
        self.rng = r;
        self
    }

    pub fn archive(mut self, strategy: ArchiveStrategy, sink: Arc<dyn ArchiveSink>) -> Self {
        self.archive = strategy;
        self.sink = sink;
        self
    }

    pub fn engine(mut self, cfg: PolicyEngineConfig) -> Self {
        self.engine = cfg;
        self
    }

    pub fn urgency(mut self, u: Urgency) -> Self {
        self.urgency = u;
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        let queue = ReviewQueue::with_rng(self.storage, self.rng.clone())?;
        let signer = derive_contextual_keypair(&self.root, Curve::Ed25519, AUTHORIZATION_KEY_CONTEXT)
            .expect("non-empty context");
        Ok(Gateway {
            audit_key: audit_key(&self.root),
            root: self.root,
            engine: PolicyEngine::new(self.engine),
            policies: RwLock::new(BTreeMap::new()),
            ledger: Mutex::new(BudgetLedger::new()),
            agent_locks: Mutex::new(HashMap::new()),
            seqs: Mutex::new(HashMap::new()),
            queue: Arc::new(queue),
            signer,
            archiver: Archiver::new(self.archive, self.sink),
            rng: self.rng,
            clock: self.clock,
            urgency: self.urgency,
            log: Mutex::new(Vec::new()),
        })
    }
}

pub struct Gateway {
    root: IdentityRoot,
    engine: PolicyEngine,
    policies: RwLock<BTreeMap<AgentId, Vec<Policy>>>,
    ledger: Mutex<BudgetLedger>,
    agent_locks: Mutex<HashMap<AgentId, Arc<tokio::sync::Mutex<()>>>>,
    seqs: Mutex<HashMap<AgentId, u64>>,
    queue: Arc<ReviewQueue>,
    signer: DerivedKeypair,
    audit_key: SymmetricKey,
    archiver: Archiver,
    rng: Arc<dyn RandomSource>,
    clock: Arc<dyn Clock>,
    urgency: Urgency,
    log: Mutex<Vec<OutcomeRecord>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("agents", &self.policies.read().len())
            .field("queue", &self.queue)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn builder(root: IdentityRoot) -> GatewayBuilder {
        GatewayBuilder {
            root,
            storage: Arc::new(InMemoryStorage::new()),
            clock: Arc::new(SystemClock),
            rng: Arc::new(OsRandom),
            sink: Arc::new(MemorySink::new()),
            archive: ArchiveStrategy::count_threshold(),
            engine: PolicyEngineConfig::default(),
            urgency: Urgency::Normal,
        }
    }

    pub fn now(&self) -> i64 {
        self.clock.now_ms()
    }

    pub fn queue(&self) -> &Arc<ReviewQueue> {
        &self.queue
    }

    pub fn archiver(&self) -> &Archiver {
        &self.archiver
    }

    pub fn audit_key(&self) -> &SymmetricKey {
        &self.audit_key
    }

    pub fn root(&self) -> &IdentityRoot {
        &self.root
    }

    pub fn authorization_public_key(&self) -> &[u8] {
        self.signer.public_key()
    }

    /// Checks an outcome's signature against this gateway's key.
    pub fn verify_outcome(&self, o: &AuthorizeOutcome) -> bool {
        let (Some(sig), Some(id)) = (&o.signature, o.decision_id) else {
            return false;
        };
        let Ok(bytes) = hex::decode(sig) else {
            return false;
        };
        let sig = aesp_core::crypto::Signature::from_bytes(bytes);
        verify(Curve::Ed25519, self.signer.public_key(), &authorization_message(&o.action, id), &sig)
    }

    /// Adds or replaces a policy without review. Used for initial setup.
    pub fn install_policy(&self, policy: Policy) {
        let mut map = self.policies.write();
        let list = map.entry(policy.agent_id.clone()).or_default();
        list.retain(|p| p.id != policy.id);
        list.push(policy);
    }

    pub fn policies(&self, agent: &AgentId) -> Vec<Policy> {
        self.policies.read().get(agent).cloned().unwrap_or_default()
    }

    pub fn agents(&self) -> Vec<AgentId> {
        self.policies.read().keys().cloned().collect()
    }

    pub fn is_registered(&self, agent: &AgentId) -> bool {
        self.policies.read().contains_key(agent)
    }

    /// Seeds the ledger, e.g. with spends that predate this process.
    pub fn with_ledger<R>(&self, f: impl FnOnce(&mut BudgetLedger) -> R) -> R {
        f(&mut self.ledger.lock())
    }

    pub fn budget(&self, agent: &AgentId) -> Result<BudgetTotals, GatewayError> {
        if !self.is_registered(agent) {
            return Err(GatewayError::UnknownAgent(agent.clone()));
        }
        Ok(self.ledger.lock().rolling_totals(agent, self.now()))
    }

    pub fn limits(&self, agent: &AgentId) -> BudgetLimits {
        let now = self.now();
        let min = |a: Option<u64>, b: Option<u64>| match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        self.policies(agent)
            .iter()
            .filter(|p| p.is_active(now))
            .fold(BudgetLimits::default(), |l, p| BudgetLimits {
                per_tx: min(l.per_tx, p.conditions.max_amount_per_tx),
                per_day: min(l.per_day, p.conditions.max_amount_per_day),
                per_week: min(l.per_week, p.conditions.max_amount_per_week),
                per_month: min(l.per_month, p.conditions.max_amount_per_month),
            })
    }

    pub fn agent_summaries(&self) -> Vec<AgentSummary> {
        let now = self.now();
        let ledger = self.ledger.lock();
        self.agents()
            .into_iter()
            .map(|id| AgentSummary {
                frozen: self.queue.is_frozen(&id),
                budget: ledger.rolling_totals(&id, now),
                limits: self.limits(&id),
                policies: self.policies(&id).len(),
                id,
            })
            .collect()
    }

    pub fn freeze(&self, agent: &AgentId) -> Result<usize, GatewayError> {
        if !self.is_registered(agent) {
            return Err(GatewayError::UnknownAgent(agent.clone()));
        }
        Ok(self.queue.freeze(agent, self.now())?)
    }

    pub fn unfreeze(&self, agent: &AgentId) -> Result<(), GatewayError> {
        if !self.is_registered(agent) {
            return Err(GatewayError::UnknownAgent(agent.clone()));
        }
        Ok(self.queue.unfreeze(agent)?)
    }

    pub fn subscribe(&self) -> Subscription {
        self.queue.subscribe()
    }

    pub fn event_log(&self) -> Vec<ReviewEvent> {
        self.queue.event_log()
    }

    /// Expires overdue reviews and flushes a closed audit window.
    pub fn tick(&self) -> usize {
        let now = self.now();
        let _ = self.archiver.sweep(now);
        self.queue.expire_sweep(now)
    }

    pub fn outcome_log(&self) -> Vec<OutcomeRecord> {
        self.log.lock().clone()
    }

    pub fn sovereignty_violations(&self) -> usize {
        self.log.lock().iter().filter(|r| r.violates_sovereignty()).count()
    }

    fn agent_lock(&self, agent: &AgentId) -> Arc<tokio::sync::Mutex<()>> {
        self.agent_locks.lock().entry(agent.clone()).or_default().clone()
    }

    /// Gates `action`, escalating to the human on failure. Resolves when the
    /// action executes, is refused, or its review ends.
    pub async fn authorize(
        &self,
        action: ActionRequest,
        level: PrivacyLevel,
    ) -> Result<AuthorizeOutcome, GatewayError> {
        let first = self.gate(action, level, None).await?;
        let Some(modified) = first.modify else {
            return Ok(self.finish(first.outcome));
        };
        // One re-entry: the modified action is gated again, and a second
        // modify verdict leaves it rejected.
        let original = Box::new(first.outcome.action);
        let second = self.gate(modified, level, Some(original)).await?;
        Ok(self.finish(second.outcome))
    }

    fn finish(&self, o: AuthorizeOutcome) -> AuthorizeOutcome {
        let record = OutcomeRecord {
            action_id: o.action.id,
            agent_id: o.action.agent_id.clone(),
            status: o.status,
            policy_approved: o.decision.is_approved(),
            review_verdict: o.review.as_ref().map(|r| r.verdict),
        };
        if record.status == AuthorizeStatus::Executed {
            EXECUTED_TOTAL.fetch_add(1, Ordering::SeqCst);
        }
        if record.violates_sovereignty() {
            VIOLATIONS_TOTAL.fetch_add(1, Ordering::SeqCst);
        }
        self.log.lock().push(record);
        o
    }

    async fn gate(
        &self,
        action: ActionRequest,
        level: PrivacyLevel,
        modified_from: Option<Box<ActionRequest>>,
    ) -> Result<GateStep, GatewayError> {
        let agent = action.agent_id.clone();
        let policies = self
            .policies
            .read()
            .get(&agent)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownAgent(agent.clone()))?;
        let lock = self.agent_lock(&agent);
        let base = |status, decision| AuthorizeOutcome {
            status,
            action: action.clone(),
            decision,
            review: None,
            review_request_id: None,
            decision_id: None,
            signature: None,
            ephemeral_address: None,
            tag_id: None,
            modified_from: modified_from.clone(),
        };

        let handle = {
            let _guard = lock.lock().await;
            let now = self.now();
            let decision = self.engine.evaluate(&action, &policies, &self.ledger.lock(), now);
            if self.queue.is_frozen(&agent) {
                return Ok(GateStep::done(base(AuthorizeStatus::Frozen, decision)));
            }
            if decision.is_approved() {
                let mut o = base(AuthorizeStatus::Executed, decision);
                self.execute(&mut o, level, now)?;
                return Ok(GateStep::done(o));
            }
            let reasons = decision
                .all_failed_checks()
                .into_iter()
                .map(ViolationReason::Check)
                .collect();
            let sub = Submission {
                violation_reasons: reasons,
                ..Submission::new(action.clone(), self.urgency, Tier::Review)
            };
            match self.queue.submit_with(sub, now) {
                Ok(h) => (h, decision),
                Err(ReviewError::AgentFrozen(_)) => {
                    return Ok(GateStep::done(base(AuthorizeStatus::Frozen, decision)))
                }
                Err(e) => return Err(e.into()),
            }
        };

        let (handle, decision) = handle;
        let request_id = handle.request_id;
        let result = handle.wait().await;
        let mut o = base(AuthorizeStatus::Rejected, decision);
        o.review_request_id = Some(request_id);
        match result {
            Ok(resp) => {
                o.review = Some(resp.clone());
                match resp.verdict {
                    ReviewVerdict::Approve => {
                        let _guard = lock.lock().await;
                        if self.queue.is_frozen(&agent) {
                            o.status = AuthorizeStatus::Frozen;
                        } else {
                            o.status = AuthorizeStatus::Executed;
                            self.execute(&mut o, level, self.now())?;
                        }
                    }
                    ReviewVerdict::Reject => {}
                    ReviewVerdict::Modify => {
                        let m = resp.modified_action.clone().expect("queue enforces modified_action");
                        return Ok(GateStep { outcome: o, modify: Some(m) });
                    }
                }
            }
            Err(ReviewError::Expired) | Err(ReviewError::PastDeadline) => o.status = AuthorizeStatus::Expired,
            Err(ReviewError::AgentFrozen(_)) => o.status = AuthorizeStatus::Frozen,
            Err(e) => return Err(e.into()),
        }
        Ok(GateStep::done(o))
    }

    /// Derives the address, signs, records the spend and tags it. Called
    /// with the agent lock held.
    fn execute(&self, o: &mut AuthorizeOutcome, level: PrivacyLevel, now: i64) -> Result<(), GatewayError> {
        let a = &o.action;
        let seq = {
            let mut seqs = self.seqs.lock();
            let s = seqs.entry(a.agent_id.clone()).or_insert(0);
            *s += 1;
            *s - 1
        };
        let tx = a.id.to_string();
        let address = derive_address(
            &self.root,
            level,
            &a.agent_id,
            Direction::Outbound,
            &a.chain,
            Some(&tx),
            Some(seq),
        )?;
        let decision_id = uuid_from(self.rng.as_ref());
        let sig = sign(&self.signer, &authorization_message(a, decision_id)).expect("ed25519 key signs");
        let policy_id = o
            .decision
            .matched_policy_id
            .or_else(|| o.decision.failed_checks.first().map(|f| f.policy_id));
        {
            let mut ledger = self.ledger.lock();
            ledger.record_spend(&a.agent_id, a.amount, now);
            if let Some(p) = policy_id {
                ledger.mark_paid(&a.agent_id, p);
            }
        }
        let mut rec = TagRecord::new(a.agent_id.clone(), address.to_string(), now);
        rec.policy_id = policy_id;
        rec.tx_id = Some(a.id);
        rec.metadata.insert("chain".into(), a.chain.clone());
        rec.metadata.insert("decision_id".into(), decision_id.to_string());
        let tag = create_tag(&self.audit_key, rec, self.rng.as_ref());
        self.archiver
            .submit(&tag, now)
            .map_err(|e| GatewayError::Storage(e.to_string()))?;
        o.decision_id = Some(decision_id);
        o.signature = Some(sig.to_hex());
        o.ephemeral_address = Some(address.to_string());
        o.tag_id = Some(tag.record.tag_id);
        Ok(())
    }

    /// Routes a policy update through review at the tier its
    /// classification demands, then applies it if accepted.
    pub async fn propose_policy_change(&self, new: Policy) -> Result<PolicyChangeOutcome, GatewayError> {
        let old = self
            .policies(&new.agent_id)
            .into_iter()
            .find(|p| p.id == new.id)
            .ok_or_else(|| GatewayError::InvalidPolicyChange(format!("no policy {} to update", new.id)))?;
        let report = classify_change(&old, &new).map_err(|e| GatewayError::InvalidPolicyChange(e.to_string()))?;
        let response = match report.required_approval {
            RequiredApproval::None => None,
            required => {
                let tier = if required == RequiredApproval::Biometric { Tier::Biometric } else { Tier::Review };
                let placeholder = ActionRequest {
                    id: uuid_from(self.rng.as_ref()),
                    agent_id: new.agent_id.clone(),
                    amount: 0,
                    to: String::new(),
                    chain: String::new(),
                    method: "policy_update".into(),
                    timestamp: self.now(),
                    current_balance: 0,
                };
                let sub = Submission {
                    violation_reasons: report
                        .changes
                        .iter()
                        .map(|c| ViolationReason::Text(c.detail.clone()))
                        .collect(),
                    policy_change: Some(report.clone()),
                    ..Submission::new(placeholder, Urgency::High, tier)
                };
                let h = self.queue.submit_with(sub, self.now())?;
                match h.wait().await {
                    Ok(r) => Some(r),
                    Err(ReviewError::Expired | ReviewError::AgentFrozen(_)) => None,
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let outcome = apply_policy_change(&old, &new, response.as_ref())?;
        if outcome.is_accepted() {
            self.install_policy(new);
        }
        Ok(outcome)
    }
}

struct GateStep {
    outcome: AuthorizeOutcome,
    /// The replacement action from a modify verdict.
    modify: Option<ActionRequest>,
}

impl GateStep {
    fn done(outcome: AuthorizeOutcome) -> Self {
        Self { outcome, modify: None }
    }
}
