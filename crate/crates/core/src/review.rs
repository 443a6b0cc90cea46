//! Human review queue, escalation tiers, emergency freeze and the
//! review event bus.
//!
//! State changes and event emission happen under one lock, so every
//! listener sees events in the order the transitions happened. Expiry is
//! driven by [`ReviewQueue::expire_sweep`]; the queue never spawns timers.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};
use uuid::Uuid;

use crate::constants::REVIEW_DEADLINE_MS;
use crate::crypto::{canonical_string, uuid_from, OsRandom, RandomSource};
use crate::identity::AgentId;
use crate::policy::{ActionRequest, CheckId, PolicyChangeReport};
use crate::storage::StorageAdapter;

const FREEZE_PREFIX: &str = "aesp:freeze:";
const REVIEW_PREFIX: &str = "aesp:review:";
const SUBSCRIBER_CAPACITY: usize = 1024;
const EVENT_LOG_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Urgency {
    Low,
    Normal,
    High,
    Critical,
}

impl Urgency {
    pub const ALL: [Urgency; 4] = [Urgency::Low, Urgency::Normal, Urgency::High, Urgency::Critical];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Rejected,
    Modified,
    Expired,
    Cancelled,
}

impl ReviewStatus {
    pub fn is_terminal(self) -> bool {
        self != ReviewStatus::Pending
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Review,
    Biometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewVerdict {
    Approve,
    Reject,
    Modify,
}

impl ReviewVerdict {
    pub const ALL: [ReviewVerdict; 3] = [
        ReviewVerdict::Approve,
        ReviewVerdict::Reject,
        ReviewVerdict::Modify,
    ];
}

/// A failed policy check (serialized as its number) or free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViolationReason {
    Check(CheckId),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub id: Uuid,
    pub action: ActionRequest,
    pub agent_id: AgentId,
    pub violation_reasons: Vec<ViolationReason>,
    pub urgency: Urgency,
    pub created_at: i64,
    pub deadline: i64,
    pub status: ReviewStatus,
    pub required_tier: Tier,
    /// Set when the request gates a policy update rather than a payment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_change: Option<PolicyChangeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ReviewResponse>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewResponse {
    pub request_id: Uuid,
    pub verdict: ReviewVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_action: Option<ActionRequest>,
    #[serde(default)]
    pub biometric_confirmed: bool,
    pub responder: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewEventType {
    RequestCreated,
    RequestApproved,
    RequestRejected,
    RequestModified,
    RequestExpired,
    RequestCancelled,
}

impl ReviewEventType {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewEventType::RequestCreated => "request_created",
            ReviewEventType::RequestApproved => "request_approved",
            ReviewEventType::RequestRejected => "request_rejected",
            ReviewEventType::RequestModified => "request_modified",
            ReviewEventType::RequestExpired => "request_expired",
            ReviewEventType::RequestCancelled => "request_cancelled",
        }
    }

    fn for_status(status: ReviewStatus) -> Self {
        match status {
            ReviewStatus::Pending => ReviewEventType::RequestCreated,
            ReviewStatus::Approved => ReviewEventType::RequestApproved,
            ReviewStatus::Rejected => ReviewEventType::RequestRejected,
            ReviewStatus::Modified => ReviewEventType::RequestModified,
            ReviewStatus::Expired => ReviewEventType::RequestExpired,
            ReviewStatus::Cancelled => ReviewEventType::RequestCancelled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvent {
    #[serde(rename = "type")]
    pub kind: ReviewEventType,
    pub request_id: Uuid,
    pub timestamp: i64,
    pub payload: Value,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ReviewError {
    #[error("AGENT_FROZEN: agent {0} is frozen")]
    AgentFrozen(AgentId),
    #[error("unknown review request {0}")]
    UnknownRequest(Uuid),
    #[error("review request already resolved as {0:?}")]
    AlreadyResolved(ReviewStatus),
    #[error("review request is past its deadline")]
    PastDeadline,
    #[error("review request expired")]
    Expired,
    #[error("tier violation: biometric confirmation required")]
    TierViolation,
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("deadline must be after created_at")]
    InvalidDeadline,
    #[error("storage: {0}")]
    Storage(String),
    #[error("review queue dropped the request")]
    Dropped,
}

impl ReviewError {
    /// Stable machine-readable code used on the HTTP surface.
    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::AgentFrozen(_) => "AGENT_FROZEN",
            ReviewError::UnknownRequest(_) => "UNKNOWN_REQUEST",
            ReviewError::AlreadyResolved(_) => "ALREADY_RESOLVED",
            ReviewError::PastDeadline => "PAST_DEADLINE",
            ReviewError::Expired => "EXPIRED",
            ReviewError::TierViolation => "TIER_VIOLATION",
            ReviewError::InvalidResponse(_) => "INVALID_RESPONSE",
            ReviewError::InvalidDeadline => "INVALID_DEADLINE",
            ReviewError::Storage(_) => "STORAGE",
            ReviewError::Dropped => "DROPPED",
        }
    }
}

fn storage_err(e: std::io::Error) -> ReviewError {
    ReviewError::Storage(e.to_string())
}

pub type ReviewOutcome = Result<ReviewResponse, ReviewError>;

/// Completion handle returned by [`ReviewQueue::submit`]. Resolves once.
#[derive(Debug)]
pub struct ReviewHandle {
    pub request_id: Uuid,
    rx: oneshot::Receiver<ReviewOutcome>,
}

impl ReviewHandle {
    pub async fn wait(self) -> ReviewOutcome {
        self.rx.await.unwrap_or(Err(ReviewError::Dropped))
    }

    /// Non-blocking poll; `None` while the request is still pending.
    pub fn try_result(&mut self) -> Option<ReviewOutcome> {
        match self.rx.try_recv() {
            Ok(v) => Some(v),
            Err(oneshot::error::TryRecvError::Empty) => None,
            Err(oneshot::error::TryRecvError::Closed) => Some(Err(ReviewError::Dropped)),
        }
    }
}

/// Receiving end of an event subscription.
#[derive(Debug)]
pub struct Subscription {
    rx: mpsc::Receiver<ReviewEvent>,
}

impl Subscription {
    pub async fn recv(&mut self) -> Option<ReviewEvent> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<ReviewEvent> {
        self.rx.try_recv().ok()
    }

    /// Everything currently buffered.
    pub fn drain(&mut self) -> Vec<ReviewEvent> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }

    pub fn into_inner(self) -> mpsc::Receiver<ReviewEvent> {
        self.rx
    }
}

#[derive(Debug, Clone)]
pub struct Submission {
    pub action: ActionRequest,
    pub violation_reasons: Vec<ViolationReason>,
    pub urgency: Urgency,
    pub tier: Tier,
    /// Defaults to `now + REVIEW_DEADLINE_MS`.
    pub deadline: Option<i64>,
    pub policy_change: Option<PolicyChangeReport>,
}

impl Submission {
    pub fn new(action: ActionRequest, urgency: Urgency, tier: Tier) -> Self {
        Self {
            action,
            violation_reasons: Vec::new(),
            urgency,
            tier,
            deadline: None,
            policy_change: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FreezeRecord {
    agent_id: AgentId,
    frozen_at: i64,
}

struct Entry {
    request: ReviewRequest,
    seq: u64,
    waiter: Option<oneshot::Sender<ReviewOutcome>>,
}

#[derive(Default)]
struct Inner {
    entries: HashMap<Uuid, Entry>,
    frozen: BTreeSet<AgentId>,
    next_seq: u64,
    subscribers: Vec<mpsc::Sender<ReviewEvent>>,
    log: VecDeque<ReviewEvent>,
    emitted: u64,
}

pub struct ReviewQueue {
    inner: Mutex<Inner>,
    storage: Arc<dyn StorageAdapter>,
    rng: Arc<dyn RandomSource>,
}

impl std::fmt::Debug for ReviewQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.lock();
        f.debug_struct("ReviewQueue")
            .field("requests", &inner.entries.len())
            .field("frozen", &inner.frozen)
            .finish()
    }
}

impl ReviewQueue {
    pub fn new(storage: Arc<dyn StorageAdapter>) -> Result<Self, ReviewError> {
        Self::with_rng(storage, Arc::new(OsRandom))
    }

    /// Loads freeze state and past requests from `storage`. Requests that
    /// were pending at shutdown stay pending but have no waiter.
    pub fn with_rng(
        storage: Arc<dyn StorageAdapter>,
        rng: Arc<dyn RandomSource>,
    ) -> Result<Self, ReviewError> {
        let mut inner = Inner::default();
        for key in storage.keys_with_prefix(FREEZE_PREFIX).map_err(storage_err)? {
            inner
                .frozen
                .insert(AgentId::from(&key[FREEZE_PREFIX.len()..]));
        }
        let mut loaded = Vec::new();
        for key in storage.keys_with_prefix(REVIEW_PREFIX).map_err(storage_err)? {
            if let Some(raw) = storage.get(&key).map_err(storage_err)? {
                let request: ReviewRequest = serde_json::from_str(&raw)
                    .map_err(|e| ReviewError::Storage(format!("{key}: {e}")))?;
                loaded.push(request);
            }
        }
        loaded.sort_by_key(|r| (r.created_at, r.id));
        for request in loaded {
            let seq = inner.next_seq;
            inner.next_seq += 1;
            inner.entries.insert(
                request.id,
                Entry {
                    request,
                    seq,
                    waiter: None,
                },
            );
        }
        Ok(Self {
            inner: Mutex::new(inner),
            storage,
            rng,
        })
    }

    pub fn submit(
        &self,
        action: ActionRequest,
        violation_reasons: Vec<ViolationReason>,
        urgency: Urgency,
        tier: Tier,
        now: i64,
    ) -> Result<ReviewHandle, ReviewError> {
        self.submit_with(
            Submission {
                violation_reasons,
                ..Submission::new(action, urgency, tier)
            },
            now,
        )
    }

    pub fn submit_with(&self, sub: Submission, now: i64) -> Result<ReviewHandle, ReviewError> {
        let deadline = sub.deadline.unwrap_or(now + REVIEW_DEADLINE_MS);
        if deadline <= now {
            return Err(ReviewError::InvalidDeadline);
        }
        let mut inner = self.inner.lock();
        let agent_id = sub.action.agent_id.clone();
        if inner.frozen.contains(&agent_id) {
            return Err(ReviewError::AgentFrozen(agent_id));
        }
        let request = ReviewRequest {
            id: uuid_from(self.rng.as_ref()),
            agent_id,
            action: sub.action,
            violation_reasons: sub.violation_reasons,
            urgency: sub.urgency,
            created_at: now,
            deadline,
            status: ReviewStatus::Pending,
            required_tier: sub.tier,
            policy_change: sub.policy_change,
            response: None,
        };
        self.persist(&request)?;
        let (tx, rx) = oneshot::channel();
        let id = request.id;
        let payload = json!({
            "agent_id": request.agent_id,
            "amount": request.action.amount,
            "urgency": request.urgency,
            "required_tier": request.required_tier,
            "deadline": request.deadline,
            "violation_reasons": request.violation_reasons,
        });
        let seq = inner.next_seq;
        inner.next_seq += 1;
        inner.entries.insert(
            id,
            Entry {
                request,
                seq,
                waiter: Some(tx),
            },
        );
        Self::emit(&mut inner, ReviewEventType::RequestCreated, id, now, payload);
        Ok(ReviewHandle { request_id: id, rx })
    }

    pub fn respond(
        &self,
        request_id: Uuid,
        response: ReviewResponse,
        now: i64,
    ) -> Result<ReviewRequest, ReviewError> {
        if response.request_id != request_id {
            return Err(ReviewError::InvalidResponse(
                "request_id does not match".into(),
            ));
        }
        let mut inner = self.inner.lock();
        let entry = inner
            .entries
            .get(&request_id)
            .ok_or(ReviewError::UnknownRequest(request_id))?;
        let request = &entry.request;
        if request.status.is_terminal() {
            return Err(ReviewError::AlreadyResolved(request.status));
        }
        if now > request.deadline {
            self.resolve(&mut inner, request_id, ReviewStatus::Expired, None, now)?;
            return Err(ReviewError::PastDeadline);
        }
        let status = match response.verdict {
            ReviewVerdict::Approve => ReviewStatus::Approved,
            ReviewVerdict::Reject => ReviewStatus::Rejected,
            ReviewVerdict::Modify => ReviewStatus::Modified,
        };
        match (&response.verdict, &response.modified_action) {
            (ReviewVerdict::Modify, None) => {
                return Err(ReviewError::InvalidResponse(
                    "modify requires modified_action".into(),
                ))
            }
            (ReviewVerdict::Modify, Some(m)) if m.agent_id != request.agent_id => {
                return Err(ReviewError::InvalidResponse(
                    "modified_action belongs to another agent".into(),
                ))
            }
            (ReviewVerdict::Approve | ReviewVerdict::Reject, Some(_)) => {
                return Err(ReviewError::InvalidResponse(
                    "modified_action only allowed with modify".into(),
                ))
            }
            _ => {}
        }
        if request.required_tier == Tier::Biometric
            && response.verdict != ReviewVerdict::Reject
            && !response.biometric_confirmed
        {
            return Err(ReviewError::TierViolation);
        }
        self.resolve(&mut inner, request_id, status, Some(response), now)
    }

    /// Transitions every past-deadline pending request to expired.
    pub fn expire_sweep(&self, now: i64) -> usize {
        let mut inner = self.inner.lock();
        let mut due: Vec<(u64, Uuid)> = inner
            .entries
            .values()
            .filter(|e| e.request.status == ReviewStatus::Pending && now > e.request.deadline)
            .map(|e| (e.seq, e.request.id))
            .collect();
        due.sort();
        let mut n = 0;
        for (_, id) in due {
            // A storage failure leaves the request pending for the next sweep.
            if self
                .resolve(&mut inner, id, ReviewStatus::Expired, None, now)
                .is_ok()
            {
                n += 1;
            }
        }
        n
    }

    /// Freezes `agent_id` and cancels its pending requests. Returns the
    /// number cancelled. Idempotent.
    pub fn freeze(&self, agent_id: &AgentId, now: i64) -> Result<usize, ReviewError> {
        let mut inner = self.inner.lock();
        let record = FreezeRecord {
            agent_id: agent_id.clone(),
            frozen_at: now,
        };
        if !inner.frozen.contains(agent_id) {
            self.storage
                .set(
                    &format!("{FREEZE_PREFIX}{agent_id}"),
                    &canonical_string(&record).expect("freeze record serializes"),
                )
                .map_err(storage_err)?;
            inner.frozen.insert(agent_id.clone());
        }
        let mut pending: Vec<(u64, Uuid)> = inner
            .entries
            .values()
            .filter(|e| e.request.status == ReviewStatus::Pending && &e.request.agent_id == agent_id)
            .map(|e| (e.seq, e.request.id))
            .collect();
        pending.sort();
        for (_, id) in &pending {
            self.resolve(&mut inner, *id, ReviewStatus::Cancelled, None, now)?;
        }
        Ok(pending.len())
    }

    pub fn unfreeze(&self, agent_id: &AgentId) -> Result<(), ReviewError> {
        let mut inner = self.inner.lock();
        self.storage
            .remove(&format!("{FREEZE_PREFIX}{agent_id}"))
            .map_err(storage_err)?;
        inner.frozen.remove(agent_id);
        Ok(())
    }

    pub fn is_frozen(&self, agent_id: &AgentId) -> bool {
        self.inner.lock().frozen.contains(agent_id)
    }

    pub fn frozen_agents(&self) -> Vec<AgentId> {
        self.inner.lock().frozen.iter().cloned().collect()
    }

    pub fn subscribe(&self) -> Subscription {
        let (tx, rx) = mpsc::channel(SUBSCRIBER_CAPACITY);
        self.inner.lock().subscribers.push(tx);
        Subscription { rx }
    }

    pub fn get(&self, id: Uuid) -> Option<ReviewRequest> {
        self.inner.lock().entries.get(&id).map(|e| e.request.clone())
    }

    /// Pending requests in dequeue order: urgency descending, then FIFO.
    pub fn pending(&self) -> Vec<ReviewRequest> {
        self.list(Some(ReviewStatus::Pending))
    }

    /// Requests with the given status (all when `None`), in dequeue order.
    pub fn list(&self, status: Option<ReviewStatus>) -> Vec<ReviewRequest> {
        let inner = self.inner.lock();
        let mut v: Vec<&Entry> = inner
            .entries
            .values()
            .filter(|e| status.is_none_or(|s| e.request.status == s))
            .collect();
        v.sort_by_key(|e| (std::cmp::Reverse(e.request.urgency), e.request.created_at, e.seq));
        v.into_iter().map(|e| e.request.clone()).collect()
    }

    /// Most recent events, oldest first.
    pub fn event_log(&self) -> Vec<ReviewEvent> {
        self.inner.lock().log.iter().cloned().collect()
    }

    /// Total events emitted since construction.
    pub fn events_emitted(&self) -> u64 {
        self.inner.lock().emitted
    }

    fn persist(&self, request: &ReviewRequest) -> Result<(), ReviewError> {
        self.storage
            .set(
                &format!("{REVIEW_PREFIX}{}", request.id),
                &canonical_string(request).expect("review request serializes"),
            )
            .map_err(storage_err)
    }

    fn resolve(
        &self,
        inner: &mut Inner,
        id: Uuid,
        status: ReviewStatus,
        response: Option<ReviewResponse>,
        now: i64,
    ) -> Result<ReviewRequest, ReviewError> {
        let entry = inner.entries.get_mut(&id).expect("caller checked presence");
        debug_assert_eq!(entry.request.status, ReviewStatus::Pending);
        let mut updated = entry.request.clone();
        updated.status = status;
        updated.response = response.clone();
        self.persist(&updated)?;
        entry.request = updated.clone();
        let outcome = match status {
            ReviewStatus::Expired => Err(ReviewError::Expired),
            ReviewStatus::Cancelled => Err(ReviewError::AgentFrozen(updated.agent_id.clone())),
            _ => Ok(response.clone().expect("verdict statuses carry a response")),
        };
        if let Some(tx) = entry.waiter.take() {
            let _ = tx.send(outcome);
        }
        let mut payload = json!({ "agent_id": updated.agent_id });
        if let Some(r) = &response {
            payload["responder"] = json!(r.responder);
            payload["biometric_confirmed"] = json!(r.biometric_confirmed);
            if let Some(m) = &r.modified_action {
                payload["modified_action"] = serde_json::to_value(m).expect("action serializes");
            }
        }
        if status == ReviewStatus::Cancelled {
            payload["reason"] = json!("AGENT_FROZEN");
        }
        Self::emit(inner, ReviewEventType::for_status(status), id, now, payload);
        Ok(updated)
    }

    fn emit(inner: &mut Inner, kind: ReviewEventType, request_id: Uuid, now: i64, payload: Value) {
        let event = ReviewEvent {
            kind,
            request_id,
            timestamp: now,
            payload,
        };
        // Full or closed subscribers are dropped rather than blocking the queue.
        inner
            .subscribers
            .retain(|tx| tx.try_send(event.clone()).is_ok());
        if inner.log.len() == EVENT_LOG_CAPACITY {
            inner.log.pop_front();
        }
        inner.log.push_back(event);
        inner.emitted += 1;
    }
}
