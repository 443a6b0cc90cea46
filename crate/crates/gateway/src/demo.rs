//! End-to-end demo scenarios against the in-memory stack. Each run is
//! deterministic: a manual clock, seeded randomness and fixed credentials.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use aesp_core::commitment::{build, random_nonce, CommitmentState, CommitmentValue, LifecycleEvent, Role};
use aesp_core::constants::{ADDRESS_POOL_SIZE, CONSOLIDATION_INTERVAL_MS, CONSOLIDATION_JITTER_RATIO};
use aesp_core::crypto::{
    address_for, derive_contextual_keypair, derive_identity_root, ChainNamespace, Curve, IdentityRoot,
    MasterCredential, RandomSource, SeededRandom,
};
use aesp_core::identity::{derive_agent, derive_owner_key, AgentId};
use aesp_core::negotiation::{InMemoryTransport, NegotiationParty};
use aesp_core::policy::{ActionRequest, Policy, PolicyConditions, Scope};
use aesp_core::privacy::{
    derive_address, next_consolidation_delay, open_tag, plan_consolidation, ArchiveStrategy, Direction,
    MemorySink, PoolConfig, PoolManager, PrivacyLevel,
};
use aesp_core::review::{ReviewError, ReviewResponse, ReviewVerdict, Subscription};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::pipeline::{AuthorizeOutcome, AuthorizeStatus, Clock, Gateway, ManualClock, PolicyChangeOutcome};

/// One unit in micro-units.
pub const U: u64 = 1_000_000;
/// 2026-03-02 10:00 UTC.
pub const DEMO_T0: i64 = 1_772_445_600_000;
const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 24 * HOUR_MS;
const USDC_BASE: &str = "0x833589fCD6eDb6E08f4c7C32D4f71b54bdA02913";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Grocery,
    Cloud,
    Nft,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Grocery, Scenario::Cloud, Scenario::Nft];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Grocery => "grocery",
            Scenario::Cloud => "cloud",
            Scenario::Nft => "nft",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}; expected grocery, cloud or nft"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Milliseconds since the scenario start.
    pub t_ms: i64,
    pub source: String,
    pub event: String,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoCheck {
    pub name: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub scenario: Scenario,
    pub trace: Vec<TraceEntry>,
    pub checks: Vec<DemoCheck>,
}

impl DemoReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn render(&self) -> String {
        let mut out = format!("scenario {}\n", self.scenario);
        for e in &self.trace {
            out.push_str(&format!(
                "  +{:>9}ms  {:<11} {:<26} {}\n",
                e.t_ms, e.source, e.event, e.detail
            ));
        }
        for c in &self.checks {
            out.push_str(&format!("  [{}] {}\n", if c.ok { "ok" } else { "FAILED" }, c.name));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("{0}")]
    Step(String),
}

fn step<E: fmt::Display>(what: &str) -> impl FnOnce(E) -> DemoError + '_ {
    move |e| DemoError::Step(format!("{what}: {e}"))
}

/// How the simulated human answers an escalation.
#[derive(Debug, Clone)]
pub enum Human {
    Approve,
    ApproveBiometric,
    Reject,
    Modify(ActionRequest),
}

fn root(byte: u8, domain: &str) -> IdentityRoot {
    derive_identity_root(&MasterCredential::new(&[byte; 32], domain).expect("32-byte payload"))
        .expect("fixed credential derives")
}

fn evm(root: &IdentityRoot, ctx: &str) -> String {
    let kp = derive_contextual_keypair(root, Curve::Secp256k1, ctx).expect("non-empty context");
    address_for(&kp, ChainNamespace::Evm).expect("evm address").into_string()
}

struct Run {
    gw: Arc<Gateway>,
    clock: Arc<ManualClock>,
    sub: Subscription,
    trace: Vec<TraceEntry>,
    checks: Vec<DemoCheck>,
    next_id: u128,
}

impl Run {
    fn new(gw: Gateway, clock: Arc<ManualClock>) -> Self {
        let gw = Arc::new(gw);
        let sub = gw.subscribe();
        Self {
            gw,
            clock,
            sub,
            trace: Vec::new(),
            checks: Vec::new(),
            next_id: 1,
        }
    }

    fn now(&self) -> i64 {
        self.clock.now_ms()
    }

    fn note(&mut self, source: &str, event: &str, detail: Value) {
        self.pump();
        self.trace.push(TraceEntry {
            t_ms: self.now() - DEMO_T0,
            source: source.into(),
            event: event.into(),
            detail,
        });
    }

    /// Moves pending review events into the trace.
    fn pump(&mut self) {
        for ev in self.sub.drain() {
            self.trace.push(TraceEntry {
                t_ms: ev.timestamp - DEMO_T0,
                source: "review".into(),
                event: ev.kind.as_str().into(),
                detail: json!({ "request_id": ev.request_id }),
            });
        }
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.push(DemoCheck { name: name.into(), ok });
    }

    fn action(&mut self, agent: &AgentId, amount: u64, to: &str, chain: &str, method: &str) -> ActionRequest {
        let id = Uuid::from_u128(self.next_id);
        self.next_id += 1;
        ActionRequest {
            id,
            agent_id: agent.clone(),
            amount,
            to: to.into(),
            chain: chain.into(),
            method: method.into(),
            timestamp: self.now(),
            current_balance: 10_000 * U,
        }
    }

    fn response(&self, id: Uuid, human: &Human) -> ReviewResponse {
        let (verdict, bio, modified) = match human {
            Human::Approve => (ReviewVerdict::Approve, false, None),
            Human::ApproveBiometric => (ReviewVerdict::Approve, true, None),
            Human::Reject => (ReviewVerdict::Reject, false, None),
            Human::Modify(a) => (ReviewVerdict::Modify, false, Some(a.clone())),
        };
        ReviewResponse {
            request_id: id,
            verdict,
            modified_action: modified,
            biometric_confirmed: bio,
            responder: "principal".into(),
            timestamp: self.now(),
        }
    }

    /// Waits for a pending review on `agent` that `skip` does not contain.
    async fn next_pending(&self, agent: &AgentId, skip: &[Uuid], done: impl Fn() -> bool) -> Option<Uuid> {
        loop {
            if let Some(r) = self
                .gw
                .queue()
                .pending()
                .into_iter()
                .find(|r| &r.agent_id == agent && !skip.contains(&r.id))
            {
                return Some(r.id);
            }
            if done() {
                return None;
            }
            tokio::time::sleep(Duration::from_millis(1)).await;
        }
    }

    /// Authorizes `action`, answering each escalation with the next entry of
    /// `humans`.
    async fn authorize(
        &mut self,
        action: ActionRequest,
        level: PrivacyLevel,
        humans: &[Human],
    ) -> Result<AuthorizeOutcome, DemoError> {
        self.note(
            "agent",
            "authorize",
            json!({ "action": action.id, "amount_units": action.amount as f64 / U as f64, "to": action.to, "chain": action.chain, "method": action.method }),
        );
        let agent = action.agent_id.clone();
        let gw = self.gw.clone();
        let task = tokio::spawn(async move { gw.authorize(action, level).await });
        let mut answered = Vec::new();
        for h in humans {
            let finished = || task.is_finished();
            let Some(id) = self.next_pending(&agent, &answered, finished).await else { break };
            let resp = self.response(id, h);
            self.gw.queue().respond(id, resp, self.now()).map_err(step("respond"))?;
            answered.push(id);
        }
        let out = task.await.map_err(step("join"))?.map_err(step("authorize"))?;
        self.note(
            "gateway",
            "outcome",
            json!({
                "status": out.status,
                "failed_checks": out.decision.all_failed_checks().iter().map(|c| c.name()).collect::<Vec<_>>(),
                "review": out.review.as_ref().map(|r| r.verdict),
                "ephemeral_address": out.ephemeral_address,
                "signature_valid": out.signature.is_some().then(|| self.gw.verify_outcome(&out)),
            }),
        );
        Ok(out)
    }

    async fn change_policy(&mut self, new: Policy, humans: &[Human]) -> Result<(PolicyChangeOutcome, Vec<String>), DemoError> {
        let agent = new.agent_id.clone();
        let gw = self.gw.clone();
        let task = tokio::spawn(async move { gw.propose_policy_change(new).await });
        let mut errors = Vec::new();
        let mut skip = Vec::new();
        for h in humans {
            let finished = || task.is_finished();
            let Some(id) = self.next_pending(&agent, &skip, finished).await else { break };
            let resp = self.response(id, h);
            match self.gw.queue().respond(id, resp, self.now()) {
                Ok(_) => skip.push(id),
                Err(e @ ReviewError::TierViolation) => {
                    self.note("console", "respond_refused", json!({ "request_id": id, "code": e.code() }));
                    errors.push(e.code().to_string());
                }
                Err(e) => return Err(step("respond")(e)),
            }
        }
        let out = task.await.map_err(step("join"))?.map_err(step("policy change"))?;
        let detail = serde_json::to_value(&out).unwrap_or(Value::Null);
        self.note("gateway", "policy_change", detail);
        Ok((out, errors))
    }

    fn finish(mut self, scenario: Scenario) -> DemoReport {
        self.pump();
        let violations = self.gw.sovereignty_violations();
        self.check("no execution without approval", violations == 0);
        DemoReport {
            scenario,
            trace: self.trace,
            checks: self.checks,
        }
    }
}

fn gateway(root: IdentityRoot, seed: u64, clock: Arc<ManualClock>, sink: Option<Arc<MemorySink>>) -> Result<Gateway, DemoError> {
    let mut b = Gateway::builder(root)
        .clock(clock)
        .rng(Arc::new(SeededRandom::new(seed)));
    if let Some(s) = sink {
        b = b.archive(ArchiveStrategy::count_threshold(), s);
    }
    b.build().map_err(step("gateway"))
}

fn policy(id: u128, agent: &AgentId, owner: &IdentityRoot, conditions: PolicyConditions, expires_at: i64) -> Policy {
    Policy {
        id: Uuid::from_u128(id),
        agent_id: agent.clone(),
        owner_xid: hex::encode(derive_owner_key(owner).public_key()),
        scope: Scope::AutoPayment,
        conditions,
        created_at: DEMO_T0 - DAY_MS,
        expires_at,
    }
}

pub async fn run(s: Scenario) -> Result<DemoReport, DemoError> {
    match s {
        Scenario::Grocery => grocery().await,
        Scenario::Cloud => cloud().await,
        Scenario::Nft => nft().await,
    }
}

/// Blocking wrapper for callers without a runtime.
pub fn run_blocking(s: Scenario) -> Result<DemoReport, DemoError> {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(step("runtime"))?
        .block_on(run(s))
}

/// Consumer, grocer and courier from separate principals. The consumer
/// negotiates a basket, both sign the commitment, and the consumer's
/// gateway enforces spending limits and chain restrictions.
async fn grocery() -> Result<DemoReport, DemoError> {
    let (rc, rg, rd) = (root(0xC1, "grocery-consumer"), root(0x62, "grocery-store"), root(0xD1, "grocery-courier"));
    let (consumer, grocer, courier) = (derive_agent(&rc, 0), derive_agent(&rg, 0), derive_agent(&rd, 0));
    let clock = Arc::new(ManualClock::new(DEMO_T0));
    let mut run = Run::new(gateway(rc.clone(), 1, clock.clone(), None)?, clock.clone());
    for (role, a) in [("consumer", &consumer), ("grocer", &grocer), ("courier", &courier)] {
        run.note("identity", "agent_derived", json!({ "role": role, "did": a.did }));
    }
    run.check(
        "three distinct agent identities",
        consumer.agent_id != grocer.agent_id && grocer.agent_id != courier.agent_id && consumer.agent_id != courier.agent_id,
    );

    // Negotiation over an in-memory transport.
    let rng: Arc<dyn RandomSource> = Arc::new(SeededRandom::new(2));
    let t = Arc::new(InMemoryTransport::new());
    let x = |r: &IdentityRoot| derive_contextual_keypair(r, Curve::X25519, "negotiation:x25519:").expect("x25519");
    let mut buyer = NegotiationParty::new(consumer.agent_id.clone(), x(&rc), t.clone(), rng.clone());
    let mut seller = NegotiationParty::new(grocer.agent_id.clone(), x(&rg), t.clone(), rng.clone());
    buyer.register_peer(seller.agent().clone(), seller.public_key());
    seller.register_peer(buyer.agent().clone(), buyer.public_key());
    let now = run.now();
    let offer = json!({ "item": "weekly basket", "price": (60 * U).to_string() });
    let sid = buyer.open(seller.agent(), offer.clone(), now).map_err(step("open"))?;
    run.note("negotiation", "offer", offer);
    seller.pump(&t, now + 1);
    let counter = json!({ "item": "weekly basket", "price": (52 * U).to_string() });
    seller.counter(sid, counter.clone(), now + 2).map_err(step("counter"))?;
    run.note("negotiation", "counter", counter);
    buyer.pump(&t, now + 3);
    let hash = buyer.accept(sid, now + 4).map_err(step("accept"))?;
    for r in seller.pump(&t, now + 5) {
        r.map_err(step("pump"))?;
    }
    run.note("negotiation", "accept", json!({ "agreement_hash": hex::encode(hash) }));
    let agreed = seller
        .session(&sid)
        .and_then(|s| s.last_offer())
        .map(|o| o.payload["price"].as_str().unwrap_or_default().to_string())
        .unwrap_or_default();
    run.check("both parties hold the agreement hash", seller.session(&sid).and_then(|s| s.agreement_hash) == Some(hash));

    // Dual-signed commitment with escrow.
    let (buyer_ctx, seller_ctx) = ("commit:grocery:buyer:", "commit:grocery:seller:");
    let escrow = evm(&rd, "escrow:contract:");
    let value = CommitmentValue {
        buyer_agent: evm(&rc, buyer_ctx),
        seller_agent: evm(&rg, seller_ctx),
        item: "weekly basket".into(),
        price: agreed.clone(),
        currency: USDC_BASE.into(),
        delivery_deadline: ((DEMO_T0 + 6 * HOUR_MS) / 1000).to_string(),
        arbitrator: evm(&rd, "arbitrator:"),
        escrow_required: true,
        nonce: random_nonce(rng.as_ref()),
    };
    let rec = build(8453, &value, Some(hash))
        .and_then(|r| r.propose())
        .and_then(|r| r.sign_as(Role::Buyer, &rc, buyer_ctx))
        .and_then(|r| r.sign_as(Role::Seller, &rg, seller_ctx))
        .map_err(step("commitment"))?;
    run.check("commitment fully signed and verifies", rec.state == CommitmentState::FullySigned && rec.verify().is_ok());
    run.note("commitment", "fully_signed", json!({ "id": rec.id(), "price": agreed }));
    buyer.commit(sid, &rec.id(), now + 6).map_err(step("commit"))?;
    seller.commit(sid, &rec.id(), now + 6).map_err(step("commit"))?;

    // The consumer's spending policy.
    let courier_addr = evm(&rd, "payee:");
    let conditions = PolicyConditions {
        max_amount_per_tx: Some(150 * U),
        max_amount_per_day: Some(300 * U),
        max_amount_per_week: Some(1_000 * U),
        max_amount_per_month: Some(3_000 * U),
        allow_list_addresses: vec![escrow.clone(), courier_addr.clone(), value.seller_agent.clone()],
        allow_list_chains: vec!["base".into()],
        allow_list_methods: vec!["escrow_deposit".into(), "pay_invoice".into()],
        time_window: None,
        min_balance_after: 20 * U,
        require_review_first_pay: true,
    };
    let p = policy(0x6e0c, &consumer.agent_id, &rc, conditions, DEMO_T0 + 90 * DAY_MS);
    run.gw.install_policy(p);

    // First high-value order goes to the human.
    run.clock.advance(60_000);
    let price: u64 = agreed.parse().map_err(step("price"))?;
    let a = run.action(&consumer.agent_id, price, &escrow, "base", "escrow_deposit");
    let o = run.authorize(a, PrivacyLevel::Isolated, &[Human::Approve]).await?;
    run.check(
        "first order reviewed then executed",
        o.status == AuthorizeStatus::Executed
            && o.review.as_ref().map(|r| r.verdict) == Some(ReviewVerdict::Approve)
            && o.decision.first_failed_check().map(|c| c.number()) == Some(6),
    );
    let rec = rec
        .advance(LifecycleEvent::EscrowFunded, o.decision_id.map(|d| d.to_string()).as_deref())
        .map_err(step("escrow"))?;
    run.note("commitment", "escrowed", json!({ "escrow_tx": rec.metadata.escrow_tx }));

    // Delivery fee inside policy: no human involved.
    run.clock.advance(2 * HOUR_MS);
    let a = run.action(&consumer.agent_id, 6 * U, &courier_addr, "base", "pay_invoice");
    let o = run.authorize(a, PrivacyLevel::Isolated, &[]).await?;
    run.check("delivery fee executed automatically", o.status == AuthorizeStatus::Executed && o.review.is_none());

    // A tip on a chain outside the allowlist is escalated and refused.
    let a = run.action(&consumer.agent_id, 3 * U, &courier_addr, "ethereum", "pay_invoice");
    let o = run.authorize(a, PrivacyLevel::Isolated, &[Human::Reject]).await?;
    run.check(
        "chain restriction escalates and the human refuses",
        o.status == AuthorizeStatus::Rejected && o.decision.first_failed_check().map(|c| c.number()) == Some(4),
    );

    // An oversized reorder is cut down by the human and re-gated.
    let a = run.action(&consumer.agent_id, 200 * U, &value.seller_agent, "base", "pay_invoice");
    let mut smaller = a.clone();
    smaller.amount = 140 * U;
    let o = run.authorize(a, PrivacyLevel::Isolated, &[Human::Modify(smaller)]).await?;
    run.check(
        "modified reorder passes the gate on re-entry",
        o.status == AuthorizeStatus::Executed && o.action.amount == 140 * U && o.decision.is_approved(),
    );

    let rec = rec
        .advance(LifecycleEvent::Delivered, Some("delivery:receipt:1"))
        .and_then(|r| r.advance(LifecycleEvent::Released, Some("release:1")))
        .map_err(step("release"))?;
    run.note("commitment", "completed", json!({ "state": rec.state }));
    run.check("commitment completed", rec.state == CommitmentState::Completed);
    let totals = run.gw.budget(&consumer.agent_id).map_err(step("budget"))?;
    run.note("budget", "totals", serde_json::to_value(totals).unwrap_or(Value::Null));
    run.check("spend recorded for executed payments only", totals.day == u128::from(price + 6 * U + 140 * U));
    Ok(run.finish(Scenario::Grocery))
}

/// A cloud optimizer under daily, weekly and monthly budgets: rolling
/// windows, a biometric-gated budget increase and an emergency freeze.
async fn cloud() -> Result<DemoReport, DemoError> {
    let owner = root(0xC7, "cloud-owner");
    let agent = derive_agent(&owner, 0).agent_id;
    let providers = [evm(&root(0xA1, "provider"), "payee:"), evm(&root(0xA2, "provider"), "payee:")];
    let clock = Arc::new(ManualClock::new(DEMO_T0));
    let mut run = Run::new(gateway(owner.clone(), 3, clock.clone(), None)?, clock.clone());
    let conditions = PolicyConditions {
        max_amount_per_tx: Some(150 * U),
        max_amount_per_day: Some(400 * U),
        max_amount_per_week: Some(1_500 * U),
        max_amount_per_month: Some(4_000 * U),
        allow_list_addresses: providers.to_vec(),
        allow_list_chains: vec!["base".into()],
        allow_list_methods: vec!["pay_invoice".into()],
        time_window: None,
        min_balance_after: 0,
        require_review_first_pay: false,
    };
    let p = policy(0xc10d, &agent, &owner, conditions, DEMO_T0 + 30 * DAY_MS);
    run.gw.install_policy(p.clone());
    run.note("policy", "installed", json!({ "agent": agent, "limits": run.gw.limits(&agent) }));

    // Three spot purchases fit the day; the fourth would breach it.
    for (i, h) in [0, 3, 6].into_iter().enumerate() {
        run.clock.set(DEMO_T0 + h * HOUR_MS);
        let a = run.action(&agent, 120 * U, &providers[i % 2], "base", "pay_invoice");
        let o = run.authorize(a, PrivacyLevel::Basic, &[]).await?;
        run.check(&format!("spot purchase {} executed", i + 1), o.status == AuthorizeStatus::Executed);
    }
    run.clock.set(DEMO_T0 + 9 * HOUR_MS);
    let a = run.action(&agent, 120 * U, &providers[0], "base", "pay_invoice");
    let o = run.authorize(a, PrivacyLevel::Basic, &[Human::Reject]).await?;
    run.check(
        "daily budget breach escalates",
        o.status == AuthorizeStatus::Rejected && o.decision.first_failed_check().map(|c| c.number()) == Some(8),
    );
    let day1 = run.gw.budget(&agent).map_err(step("budget"))?;
    run.note("budget", "totals", serde_json::to_value(day1).unwrap_or(Value::Null));
    run.check("rejected purchase left the budget untouched", day1.day == u128::from(360 * U));

    // The 24 h window rolls forward and frees room.
    run.clock.set(DEMO_T0 + DAY_MS + 4 * HOUR_MS);
    let rolled = run.gw.budget(&agent).map_err(step("budget"))?;
    run.note("budget", "window_rolled", serde_json::to_value(rolled).unwrap_or(Value::Null));
    let a = run.action(&agent, 120 * U, &providers[1], "base", "pay_invoice");
    let o = run.authorize(a, PrivacyLevel::Basic, &[]).await?;
    run.check(
        "rolling window admits the next purchase",
        rolled.day == u128::from(120 * U) && o.status == AuthorizeStatus::Executed,
    );

    // Budget increase needs the biometric tier; a plain approve is refused.
    let mut raised = p.clone();
    raised.conditions.max_amount_per_day = Some(800 * U);
    let (out, errors) = run.change_policy(raised, &[Human::Approve, Human::ApproveBiometric]).await?;
    run.check(
        "budget increase classified biometric and accepted only with biometric",
        out.is_accepted() && errors == ["TIER_VIOLATION"] && run.gw.limits(&agent).per_day == Some(800 * U),
    );
    let mut extended = run.gw.policies(&agent)[0].clone();
    extended.expires_at += 30 * DAY_MS;
    let (out, errors) = run.change_policy(extended, &[Human::Approve]).await?;
    run.check("expiration extension accepted on review", out.is_accepted() && errors.is_empty());

    // Emergency freeze while a review is pending.
    run.clock.advance(HOUR_MS);
    let big = run.action(&agent, 300 * U, &providers[0], "base", "pay_invoice");
    run.note("agent", "authorize", json!({ "action": big.id, "amount_units": 300 }));
    let gw = run.gw.clone();
    let pending = tokio::spawn(async move { gw.authorize(big, PrivacyLevel::Basic).await });
    run.next_pending(&agent, &[], || false).await;
    let cancelled = run.gw.freeze(&agent).map_err(step("freeze"))?;
    run.note("principal", "freeze", json!({ "agent": agent, "cancelled": cancelled }));
    let o = pending.await.map_err(step("join"))?.map_err(step("authorize"))?;
    run.note("gateway", "outcome", json!({ "status": o.status }));
    run.check("freeze cancels the pending review", cancelled == 1 && o.status == AuthorizeStatus::Frozen);
    let a = run.action(&agent, 10 * U, &providers[0], "base", "pay_invoice");
    let o = run.authorize(a, PrivacyLevel::Basic, &[]).await?;
    run.check("frozen agent cannot spend even inside policy", o.status == AuthorizeStatus::Frozen && o.signature.is_none());
    run.gw.unfreeze(&agent).map_err(step("unfreeze"))?;
    run.note("principal", "unfreeze", json!({ "agent": agent }));
    let a = run.action(&agent, 10 * U, &providers[0], "base", "pay_invoice");
    let o = run.authorize(a, PrivacyLevel::Basic, &[]).await?;
    run.check("unfrozen agent resumes", o.status == AuthorizeStatus::Executed);
    Ok(run.finish(Scenario::Cloud))
}

/// An NFT scout buying across marketplaces behind ephemeral addresses,
/// with pool management, batched consolidation and sealed audit tags.
async fn nft() -> Result<DemoReport, DemoError> {
    let owner = root(0x4E, "nft-owner");
    let agent = derive_agent(&owner, 0).agent_id;
    let clock = Arc::new(ManualClock::new(DEMO_T0));
    let sink = Arc::new(MemorySink::new());
    let mut run = Run::new(gateway(owner.clone(), 5, clock.clone(), Some(sink.clone()))?, clock.clone());

    // Address behaviour at each privacy level.
    let addr = |level, dir, chain: &str, tx: Option<&str>, seq| {
        derive_address(&owner, level, &agent, dir, chain, tx, seq).map(|a| a.into_string())
    };
    let t1 = addr(PrivacyLevel::Transparent, Direction::Outbound, "ethereum", None, None).map_err(step("derive"))?;
    let t2 = addr(PrivacyLevel::Transparent, Direction::Inbound, "ethereum", None, None).map_err(step("derive"))?;
    let b_in = addr(PrivacyLevel::Basic, Direction::Inbound, "ethereum", None, None).map_err(step("derive"))?;
    let b_out = addr(PrivacyLevel::Basic, Direction::Outbound, "ethereum", None, None).map_err(step("derive"))?;
    let i1 = addr(PrivacyLevel::Isolated, Direction::Outbound, "ethereum", Some("listing-1"), Some(0)).map_err(step("derive"))?;
    let i2 = addr(PrivacyLevel::Isolated, Direction::Outbound, "ethereum", Some("listing-2"), Some(1)).map_err(step("derive"))?;
    let sol = addr(PrivacyLevel::Isolated, Direction::Outbound, "solana", Some("listing-3"), Some(2)).map_err(step("derive"))?;
    run.note("privacy", "transparent", json!({ "address": t1 }));
    run.note("privacy", "basic", json!({ "inbound": b_in, "outbound": b_out }));
    run.note("privacy", "isolated", json!({ "listing_1": i1, "listing_2": i2, "solana": sol }));
    run.check("transparent reuses one vault address", t1 == t2);
    run.check("basic separates directions", b_in != b_out && b_in != t1);
    run.check("isolated gives every purchase its own address", i1 != i2 && i1 != b_out && !sol.starts_with("0x"));

    // Pool claim and replenish.
    let pools = PoolManager::new(owner.clone(), PoolConfig { size: ADDRESS_POOL_SIZE, auto_replenish: false });
    let now = run.now();
    let derived = pools.init_pool(&agent, "ethereum", Direction::Outbound, now).map_err(step("pool"))?;
    let mut claimed = Vec::new();
    for i in 0..3u128 {
        let r = pools
            .pool_claim(&agent, "ethereum", Direction::Outbound, Uuid::from_u128(0x1000 + i), now)
            .map_err(step("claim"))?;
        pools.mark_spent(&agent, "ethereum", Direction::Outbound, &r.address).map_err(step("spend"))?;
        claimed.push(r.address.into_string());
    }
    let before = pools.counts(&agent, "ethereum", Direction::Outbound).map_err(step("counts"))?;
    let added = pools.pool_replenish(&agent, "ethereum", Direction::Outbound, now).map_err(step("replenish"))?;
    let after = pools.counts(&agent, "ethereum", Direction::Outbound).map_err(step("counts"))?;
    run.note("pool", "claimed", json!({ "addresses": claimed }));
    run.note("pool", "replenished", json!({ "added": added, "before": before, "after": after }));
    run.check(
        "pool refills to its target size",
        derived == ADDRESS_POOL_SIZE && before.pooled == ADDRESS_POOL_SIZE - 3 && added == 3 && after.pooled == ADDRESS_POOL_SIZE,
    );

    // Purchases across marketplaces, each under an isolated address.
    let markets = [
        ("ethereum", evm(&root(0xB1, "market"), "payee:")),
        ("base", evm(&root(0xB2, "market"), "payee:")),
        ("polygon", evm(&root(0xB3, "market"), "payee:")),
    ];
    let conditions = PolicyConditions {
        max_amount_per_tx: Some(500 * U),
        max_amount_per_day: Some(2_000 * U),
        max_amount_per_week: None,
        max_amount_per_month: None,
        allow_list_addresses: markets.iter().map(|m| m.1.clone()).collect(),
        allow_list_chains: markets.iter().map(|m| m.0.to_string()).collect(),
        allow_list_methods: vec!["buy_nft".into()],
        time_window: None,
        min_balance_after: 0,
        require_review_first_pay: false,
    };
    run.gw.install_policy(policy(0x4f7, &agent, &owner, conditions, DEMO_T0 + 30 * DAY_MS));
    let mut spent = Vec::new();
    for i in 0..6usize {
        run.clock.advance(20 * 60_000);
        let (chain, to) = markets[i % 3].clone();
        let a = run.action(&agent, (40 + 15 * i as u64) * U, &to, chain, "buy_nft");
        let o = run.authorize(a, PrivacyLevel::Isolated, &[]).await?;
        if o.status == AuthorizeStatus::Executed {
            spent.extend(o.ephemeral_address.clone());
        }
    }
    let unique: std::collections::BTreeSet<_> = spent.iter().collect();
    run.check("six purchases on six distinct addresses", spent.len() == 6 && unique.len() == 6);

    // Shuffled, batched consolidation with jitter before the next cycle.
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut to_sweep: Vec<_> = spent.iter().chain(&claimed).map(|s| aesp_core::crypto::Address::from_raw(s.clone())).collect();
    to_sweep.sort();
    let plan = plan_consolidation(&to_sweep, 5, &mut rng, run.now()).map_err(step("plan"))?;
    let next = next_consolidation_delay(CONSOLIDATION_INTERVAL_MS, CONSOLIDATION_JITTER_RATIO, rng.gen()).map_err(step("jitter"))?;
    run.note(
        "privacy",
        "consolidation_planned",
        json!({
            "batch_sizes": plan.batches.iter().map(Vec::len).collect::<Vec<_>>(),
            "inter_batch_delays_min": plan.inter_batch_delays_ms.iter().map(|d| *d as f64 / 60_000.0).collect::<Vec<_>>(),
            "next_cycle_in_h": next as f64 / HOUR_MS as f64,
        }),
    );
    let delays_ok = plan.inter_batch_delays_ms.iter().all(|d| (600_000..=3_600_000).contains(d));
    let base = CONSOLIDATION_INTERVAL_MS as f64;
    let jitter_ok = (next as f64) >= base * (1.0 - CONSOLIDATION_JITTER_RATIO) && (next as f64) < base * (1.0 + CONSOLIDATION_JITTER_RATIO);
    run.check(
        "consolidation batched by five with bounded delays",
        plan.len() == 9 && plan.batches.len() == 2 && delays_ok && jitter_ok,
    );
    let pool_plan = pools
        .plan_consolidation(&agent, "ethereum", Direction::Outbound, 5, &mut rng, run.now())
        .map_err(step("pool plan"))?;
    let swept = pools.execute_plan(&agent, "ethereum", Direction::Outbound, &pool_plan).map_err(step("execute"))?;
    let c = pools.counts(&agent, "ethereum", Direction::Outbound).map_err(step("counts"))?;
    run.note("pool", "consolidated", json!({ "swept": swept, "counts": c }));
    run.check("pool addresses consolidated", swept == 3 && c.consolidated == 3);

    // The owner rebuilds purchase history from the sealed archive.
    let flushed = run.gw.archiver().flush().map_err(step("flush"))?;
    let archived: Vec<_> = sink.batches().into_iter().flatten().collect();
    let mut history = Vec::new();
    for t in &archived {
        history.push(open_tag(run.gw.audit_key(), &t.ciphertext).map_err(step("open tag"))?);
    }
    run.note(
        "audit",
        "archive",
        json!({ "batches": sink.batches().len(), "tags": archived.len(), "flushed_at_end": flushed }),
    );
    let recovered: std::collections::BTreeSet<_> = history.iter().map(|r| &r.ephemeral_address).collect();
    run.check(
        "audit tags reconstruct every purchase address",
        archived.len() == 6 && recovered.len() == 6 && spent.iter().all(|a| recovered.contains(a)),
    );
    Ok(run.finish(Scenario::Nft))
}
