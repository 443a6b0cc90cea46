use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use aesp_core::commitment::{
    build, eip712_digest, lifecycle_next, CommitmentState, CommitmentValue, LifecycleEvent, Role,
};
use aesp_core::constants::{
    CONSOLIDATION_INTERVAL_MS, CONSOLIDATION_JITTER_RATIO, DAY_MS, INTER_BATCH_DELAY_MAX_MS,
    INTER_BATCH_DELAY_MIN_MS, MICROS_PER_UNIT, REVIEW_DEADLINE_MS,
};
use aesp_core::crypto::{
    address_for, derive_contextual_keypair, derive_identity_root, recover_evm_address, sha256, sign, verify,
    ChainNamespace, Curve, DerivedKeypair, IdentityRoot, MasterCredential, SeededRandom,
};
use aesp_core::identity::{derive_agent, AgentId};
use aesp_core::negotiation::{next_state, MessageKind, SessionState};
use aesp_core::policy::{
    ActionRequest, BudgetLedger, CheckId, Policy, PolicyConditions, PolicyEngine, PolicyEngineConfig, Scope,
    TimeWindow,
};
use aesp_core::privacy::{
    derive_address, fisher_yates_shuffle, next_consolidation_delay, plan_consolidation, Direction, PrivacyLevel,
};
use aesp_core::review::{
    ReviewError, ReviewHandle, ReviewQueue, ReviewResponse, ReviewStatus, ReviewVerdict, Tier, Urgency,
};
use aesp_core::storage::{FileStorage, InMemoryStorage, StorageAdapter};
use aesp_gateway::demo::{self, Scenario, DEMO_T0};
use aesp_gateway::pipeline::sovereignty_counters;
use aesp_gateway::{AuthorizeStatus, Gateway, ManualClock};
use aesp_testkit::policy::{evaluate as oracle, OracleInput};
use aesp_testkit::stats::{chi_square_uniform, permutation_rank, CHI2_23_DF_99};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use uuid::Uuid;

use crate::{ensure, guarded, line, Outcome};

const U: u64 = MICROS_PER_UNIT;
const T0: i64 = DEMO_T0;

pub fn suites() -> Outcome {
    let suites: [crate::Criterion; 7] = [
        ("(a) policy engine vs oracle", policy_oracle),
        ("(b) negotiation transitions", negotiation_fsm),
        ("(c) commitment lifecycle", commitment_lifecycle),
        ("(d) review queue", review_queue),
        ("(e) crypto vectors", crypto_vectors),
        ("(f) consolidation randomness", consolidation_randomness),
        ("(g) sovereignty", sovereignty),
    ];
    let mut failed = Vec::new();
    for (name, f) in suites {
        let r = guarded(f);
        line("  ", name, &r);
        if r.is_err() {
            failed.push(name);
        }
    }
    ensure(failed.is_empty(), || format!("failed {}", failed.join(", ")))?;
    Ok("7 suites".into())
}

// (a)

const ADDRS: [&str; 4] = ["0xa1", "0xa2", "0xa3", "0xa4"];
const CHAINS: [&str; 3] = ["base", "ethereum", "solana"];
const METHODS: [&str; 3] = ["transfer", "approve", "swap"];

fn subset(rng: &mut ChaCha20Rng, items: &[&str]) -> Vec<String> {
    if rng.gen_bool(0.4) {
        return Vec::new();
    }
    items.iter().filter(|_| rng.gen_bool(0.6)).map(|s| s.to_string()).collect()
}

fn hhmm(m: u32) -> String {
    format!("{:02}:{:02}", m / 60, m % 60)
}

fn cap(rng: &mut ChaCha20Rng, hi: u64) -> Option<u64> {
    rng.gen_bool(0.7).then(|| rng.gen_range(1..=hi) * U)
}

fn random_policy(rng: &mut ChaCha20Rng, agent: &AgentId, now: i64) -> Policy {
    let created_at = now - rng.gen_range(-DAY_MS..30 * DAY_MS);
    Policy {
        id: Uuid::from_u128(rng.gen()),
        agent_id: agent.clone(),
        owner_xid: "00".repeat(32),
        scope: Scope::AutoPayment,
        conditions: PolicyConditions {
            max_amount_per_tx: cap(rng, 150),
            max_amount_per_day: cap(rng, 600),
            max_amount_per_week: cap(rng, 2500),
            max_amount_per_month: cap(rng, 6000),
            allow_list_addresses: subset(rng, &ADDRS),
            allow_list_chains: subset(rng, &CHAINS),
            allow_list_methods: subset(rng, &METHODS),
            time_window: rng
                .gen_bool(0.6)
                .then(|| TimeWindow::new(hhmm(rng.gen_range(0..1440)), hhmm(rng.gen_range(0..1440))).unwrap()),
            min_balance_after: if rng.gen_bool(0.5) { rng.gen_range(0..300) * U } else { 0 },
            require_review_first_pay: rng.gen_bool(0.4),
        },
        created_at,
        expires_at: created_at + rng.gen_range(1..60 * DAY_MS),
    }
}

struct Case {
    request: ActionRequest,
    policies: Vec<Policy>,
    spends: Vec<(u64, i64)>,
    paid: Vec<Uuid>,
    now: i64,
    enabled: BTreeSet<CheckId>,
    tz: i32,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x00ac_ce97);
    let agent = AgentId::from("agent-1");
    let now = T0 + rng.gen_range(0..90 * DAY_MS);
    let policies: Vec<Policy> = (0..rng.gen_range(0..4)).map(|_| random_policy(&mut rng, &agent, now)).collect();
    let spends = (0..rng.gen_range(0..12))
        .map(|_| (rng.gen_range(1..200) * U, now - rng.gen_range(-DAY_MS..40 * DAY_MS)))
        .collect();
    let paid = policies.iter().filter(|_| rng.gen_bool(0.5)).map(|p| p.id).collect();
    let enabled = CheckId::ALL.into_iter().filter(|_| rng.gen_bool(0.8)).collect();
    let request = ActionRequest {
        id: Uuid::from_u128(rng.gen()),
        agent_id: agent,
        amount: rng.gen_range(0..200) * U + rng.gen_range(0..U),
        to: ADDRS.choose(&mut rng).unwrap().to_string(),
        chain: CHAINS.choose(&mut rng).unwrap().to_string(),
        method: METHODS.choose(&mut rng).unwrap().to_string(),
        timestamp: now - rng.gen_range(0..DAY_MS),
        current_balance: rng.gen_range(0..1000) * U,
    };
    Case {
        request,
        policies,
        spends,
        paid,
        now,
        enabled,
        tz: rng.gen_range(-720..=840),
    }
}

type View = (bool, Option<String>, Vec<(String, Vec<u8>)>);

fn engine_view(case: &Case) -> View {
    let mut ledger = BudgetLedger::new();
    for &(a, t) in &case.spends {
        ledger.record_spend(&case.request.agent_id, a, t);
    }
    for &p in &case.paid {
        ledger.mark_paid(&case.request.agent_id, p);
    }
    let engine = PolicyEngine::new(PolicyEngineConfig {
        enabled_checks: case.enabled.clone(),
        tz_offset_minutes: case.tz,
    });
    let d = engine.evaluate(&case.request, &case.policies, &ledger, case.now);
    (
        d.is_approved(),
        d.matched_policy_id.map(|u| u.to_string()),
        d.failed_checks
            .iter()
            .map(|f| (f.policy_id.to_string(), f.checks.iter().map(|c| c.number()).collect()))
            .collect(),
    )
}

fn oracle_view(case: &Case) -> View {
    let request = serde_json::to_value(&case.request).unwrap();
    let policies: Vec<_> = case.policies.iter().map(|p| serde_json::to_value(p).unwrap()).collect();
    let spends: Vec<_> = case
        .spends
        .iter()
        .map(|&(a, t)| json!({"agent_id": case.request.agent_id, "amount": a, "timestamp": t}))
        .collect();
    let paid: Vec<_> = case.paid.iter().map(|p| (case.request.agent_id.to_string(), p.to_string())).collect();
    let enabled: Vec<u8> = case.enabled.iter().map(|c| c.number()).collect();
    let d = oracle(&OracleInput {
        request: &request,
        policies: &policies,
        spends: &spends,
        paid: &paid,
        now: case.now,
        enabled: &enabled,
        tz_offset_minutes: i64::from(case.tz),
    });
    (d.approved, d.matched_policy_id, d.failed)
}

fn policy_oracle() -> Outcome {
    let mut approved = 0;
    let mut per_check = [0usize; 9];
    for seed in 0..10_000u64 {
        let case = random_case(seed);
        let e = engine_view(&case);
        let o = oracle_view(&case);
        ensure(e == o, || format!("case {seed}: engine {e:?} oracle {o:?}"))?;
        approved += usize::from(e.0);
        for (_, checks) in &e.2 {
            for &c in checks {
                per_check[c as usize] += 1;
            }
        }
    }
    ensure((300..9_700).contains(&approved), || format!("degenerate generator: {approved} approved"))?;
    ensure(per_check[1..].iter().all(|&n| n > 100), || format!("checks under-exercised: {per_check:?}"))?;
    Ok(format!("10000 cases agree, {approved} approved"))
}

// (b)

fn negotiation_fsm() -> Outcome {
    let mut pairs = 0;
    let mut legal = Vec::new();
    for s in SessionState::ALL {
        for k in MessageKind::ALL {
            pairs += 1;
            if let Some(n) = next_state(s, k) {
                legal.push((s, k, n));
            }
        }
    }
    use MessageKind as K;
    use SessionState as S;
    let expected = [
        (S::Initial, K::Offer, S::OfferSent),
        (S::Initial, K::OfferRecv, S::OfferReceived),
        (S::OfferSent, K::Counter, S::Countering),
        (S::OfferSent, K::Accept, S::Accepted),
        (S::OfferSent, K::Reject, S::Rejected),
        (S::OfferReceived, K::Counter, S::Countering),
        (S::OfferReceived, K::Accept, S::Accepted),
        (S::OfferReceived, K::Reject, S::Rejected),
        (S::Countering, K::Counter, S::Countering),
        (S::Countering, K::Accept, S::Accepted),
        (S::Countering, K::Reject, S::Rejected),
        (S::Accepted, K::Commit, S::Committed),
        (S::Committed, K::Dispute, S::Disputed),
    ];
    ensure(pairs == 56, || format!("{pairs} pairs"))?;
    ensure(legal == expected, || format!("legal set {legal:?}"))?;
    Ok(format!("{pairs} pairs, {} legal", legal.len()))
}

// (c)

const BUYER_CTX: &str = "commit:c1:buyer:";
const SELLER_CTX: &str = "commit:c1:seller:";

fn root(b: u8, domain: &str) -> IdentityRoot {
    derive_identity_root(&MasterCredential::new(&[b; 32], domain).unwrap()).unwrap()
}

fn evm(root: &IdentityRoot, ctx: &str) -> String {
    let kp = derive_contextual_keypair(root, Curve::Secp256k1, ctx).unwrap();
    address_for(&kp, ChainNamespace::Evm).unwrap().into_string()
}

fn commitment_value(buyer: &IdentityRoot, seller: &IdentityRoot) -> CommitmentValue {
    CommitmentValue {
        buyer_agent: evm(buyer, BUYER_CTX),
        seller_agent: evm(seller, SELLER_CTX),
        item: "cloud credits".into(),
        price: "1000".into(),
        currency: "0x833589fCD6eDb6E08f4c7C32D4f71b54bdA02913".into(),
        delivery_deadline: "1772500000".into(),
        arbitrator: "0x6813Eb9362372EEF6200f3b1dbC3f819671cBA69".into(),
        escrow_required: true,
        nonce: "77".into(),
    }
}

fn commitment_lifecycle() -> Outcome {
    let mut pairs = 0;
    let mut legal = 0;
    for s in CommitmentState::ALL {
        for e in LifecycleEvent::ALL {
            pairs += 1;
            legal += usize::from(lifecycle_next(s, e).is_some());
        }
    }
    ensure(pairs == 72 && legal == 12, || format!("{pairs} pairs, {legal} legal"))?;

    let (rb, rs, mallory) = (root(1, "lifecycle"), root(2, "lifecycle"), root(3, "lifecycle"));
    let proposed = build(8453, &commitment_value(&rb, &rs), None).unwrap().propose().unwrap();
    let buyer_only = proposed.sign_as(Role::Buyer, &rb, BUYER_CTX).unwrap();
    for e in LifecycleEvent::ALL {
        if let Ok(next) = buyer_only.advance(e, None) {
            ensure(next.state == CommitmentState::Cancelled, || format!("{e:?} advanced a half-signed record"))?;
        }
    }
    ensure(proposed.sign_as(Role::Seller, &rs, SELLER_CTX).is_err(), || "seller signed before buyer".into())?;
    ensure(buyer_only.sign_as(Role::Seller, &mallory, BUYER_CTX).is_err(), || "wrong seller key accepted".into())?;
    let full = buyer_only.sign_as(Role::Seller, &rs, SELLER_CTX).unwrap();
    ensure(full.state == CommitmentState::FullySigned, || format!("{:?}", full.state))?;
    full.verify().map_err(|e| e.to_string())?;
    // Both signatures recover to their declared parties.
    let digest = eip712_digest(&full);
    let b = recover_evm_address(&digest, full.buyer_signature.as_ref().unwrap()).unwrap();
    let s = recover_evm_address(&digest, full.seller_signature.as_ref().unwrap()).unwrap();
    ensure(b.as_str() == full.value.buyer_agent && s.as_str() == full.value.seller_agent, || {
        "signature recovery mismatch".into()
    })?;
    let mut rec = full;
    for e in [LifecycleEvent::EscrowFunded, LifecycleEvent::Delivered, LifecycleEvent::Released] {
        rec = rec.advance(e, Some("ref")).map_err(|e| e.to_string())?;
    }
    ensure(rec.state == CommitmentState::Completed, || format!("{:?}", rec.state))?;
    Ok(format!("{pairs} pairs, {legal} legal; one signature never suffices"))
}

// (d)

fn review_action(agent: &str, n: u64) -> ActionRequest {
    ActionRequest {
        id: Uuid::from_u128(u128::from(n)),
        agent_id: AgentId::from(agent),
        amount: n,
        to: "0xabc".into(),
        chain: "base".into(),
        method: "transfer".into(),
        timestamp: T0,
        current_balance: 1_000_000_000,
    }
}

fn review_response(id: Uuid, verdict: ReviewVerdict, bio: bool, modified: Option<ActionRequest>, now: i64) -> ReviewResponse {
    ReviewResponse {
        request_id: id,
        verdict,
        modified_action: modified,
        biometric_confirmed: bio,
        responder: "owner".into(),
        timestamp: now,
    }
}

fn queue(storage: Arc<dyn StorageAdapter>) -> ReviewQueue {
    ReviewQueue::with_rng(storage, Arc::new(SeededRandom::new(1))).unwrap()
}

fn exactly_once(seed: u64) -> Result<usize, String> {
    const AGENTS: [&str; 3] = ["agent-a", "agent-b", "agent-c"];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let q = queue(Arc::new(InMemoryStorage::new()));
    let mut sub = q.subscribe();
    let mut handles: Vec<ReviewHandle> = Vec::new();
    let mut outcomes: HashMap<Uuid, usize> = HashMap::new();
    let mut now = T0;
    for i in 0..rng.gen_range(1..80u64) {
        match rng.gen_range(0..12) {
            0..=3 => {
                let agent = AGENTS[rng.gen_range(0..3)];
                let tier = if rng.gen_bool(0.3) { Tier::Biometric } else { Tier::Review };
                match q.submit(review_action(agent, i), vec![], Urgency::ALL[rng.gen_range(0..4)], tier, now) {
                    Ok(h) => handles.push(h),
                    Err(_) => ensure(q.is_frozen(&AgentId::from(agent)), || "submit refused while unfrozen".into())?,
                }
            }
            4..=7 if !handles.is_empty() => {
                let id = handles[rng.gen_range(0..handles.len())].request_id;
                let v = ReviewVerdict::ALL[rng.gen_range(0..3)];
                let agent = q.get(id).unwrap().agent_id;
                let modified = (v == ReviewVerdict::Modify).then(|| review_action(agent.as_str(), 10_000 + i));
                let _ = q.respond(id, review_response(id, v, rng.gen_bool(0.5), modified, now), now);
            }
            8 | 9 => now += rng.gen_range(0..REVIEW_DEADLINE_MS / 2),
            10 => {
                q.expire_sweep(now);
            }
            _ => {
                let agent = AgentId::from(AGENTS[rng.gen_range(0..3)]);
                if rng.gen_bool(0.5) {
                    q.freeze(&agent, now).unwrap();
                    ensure(q.pending().iter().all(|r| r.agent_id != agent), || "frozen agent still pending".into())?;
                } else {
                    q.unfreeze(&agent).unwrap();
                }
            }
        }
        for h in &mut handles {
            if h.try_result().is_some() {
                *outcomes.entry(h.request_id).or_default() += 1;
            }
        }
        handles.retain(|h| !outcomes.contains_key(&h.request_id));
    }
    q.expire_sweep(now + REVIEW_DEADLINE_MS + 1);
    for h in &mut handles {
        ensure(h.try_result().is_some(), || "request unresolved after sweep".into())?;
        *outcomes.entry(h.request_id).or_default() += 1;
    }
    let all = q.list(None);
    ensure(outcomes.values().all(|&n| n == 1), || "a request resolved twice".into())?;
    ensure(outcomes.len() == all.len(), || format!("{} outcomes for {} requests", outcomes.len(), all.len()))?;
    ensure(all.iter().all(|r| r.status.is_terminal()), || "non-terminal request".into())?;
    ensure(sub.drain().len() == 2 * all.len(), || "events are not exactly created + terminal".into())?;
    Ok(all.len())
}

fn tier_matrix() -> Result<(), String> {
    for tier in [Tier::Review, Tier::Biometric] {
        for verdict in ReviewVerdict::ALL {
            for bio in [false, true] {
                let q = queue(Arc::new(InMemoryStorage::new()));
                let id = q.submit(review_action("agent-a", 5), vec![], Urgency::Normal, tier, T0).unwrap().request_id;
                let modified = (verdict == ReviewVerdict::Modify).then(|| review_action("agent-a", 1));
                let got = q.respond(id, review_response(id, verdict, bio, modified, T0), T0 + 1);
                let refuse = tier == Tier::Biometric && verdict != ReviewVerdict::Reject && !bio;
                match got {
                    Err(ReviewError::TierViolation) if refuse => {
                        ensure(q.get(id).unwrap().status == ReviewStatus::Pending, || "refusal resolved".into())?
                    }
                    Ok(r) if !refuse => ensure(r.status.is_terminal(), || "accepted but pending".into())?,
                    other => return Err(format!("{tier:?} {verdict:?} bio={bio}: {other:?}")),
                }
            }
        }
    }
    Ok(())
}

fn freeze_persists() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let agent = AgentId::from("agent-a");
    {
        let q = queue(Arc::new(FileStorage::open(dir.path()).unwrap()));
        for i in 0..3 {
            q.submit(review_action("agent-a", i), vec![], Urgency::High, Tier::Review, T0).unwrap();
        }
        ensure(q.freeze(&agent, T0 + 1).unwrap() == 3, || "freeze did not cancel all".into())?;
    }
    let q = queue(Arc::new(FileStorage::open(dir.path()).unwrap()));
    ensure(q.is_frozen(&agent), || "freeze lost on restart".into())?;
    let refused = q.submit(review_action("agent-a", 9), vec![], Urgency::Low, Tier::Review, T0 + 2);
    ensure(matches!(refused, Err(ReviewError::AgentFrozen(_))), || "frozen agent accepted a request".into())?;
    ensure(q.list(None).iter().filter(|r| r.status == ReviewStatus::Cancelled).count() == 3, || {
        "cancelled requests lost on restart".into()
    })?;
    Ok(())
}

fn review_queue() -> Outcome {
    let mut requests = 0;
    for seed in 0..300 {
        requests += exactly_once(seed).map_err(|e| format!("exactly-once seed {seed}: {e}"))?;
    }
    tier_matrix().map_err(|e| format!("tier: {e}"))?;
    freeze_persists().map_err(|e| format!("freeze: {e}"))?;
    Ok(format!(
        "exactly-once over 300 sequences ({requests} requests), tier matrix 12/12, freeze persists"
    ))
}

// (e)

fn vectors() -> Value {
    serde_json::from_str(include_str!("../../../core/tests/data/golden_vectors.json")).unwrap()
}

fn crypto_vectors() -> Outcome {
    let v = vectors();
    let cases = v["contextual_keys"].as_array().ok_or("no contextual_keys")?;
    for case in cases {
        let payload = hex::decode(case["payload_hex"].as_str().unwrap()).unwrap();
        let r = derive_identity_root(&MasterCredential::new(&payload, case["domain"].as_str().unwrap()).unwrap())
            .unwrap();
        let root_bytes = hex::decode(case["expected_root_hex"].as_str().unwrap()).unwrap();
        ensure(r.fingerprint() == sha256(&root_bytes), || format!("root mismatch {case}"))?;
        let curve = match case["curve"].as_str().unwrap() {
            "ed25519" => Curve::Ed25519,
            "secp256k1" => Curve::Secp256k1,
            _ => Curve::X25519,
        };
        let kp = derive_contextual_keypair(&r, curve, case["ctx"].as_str().unwrap()).unwrap();
        ensure(hex::encode(kp.public_key()) == case["expected_pubkey_hex"].as_str().unwrap(), || {
            format!("key mismatch {case}")
        })?;
        if let Some(addr) = case["expected_evm_address"].as_str() {
            ensure(address_for(&kp, ChainNamespace::Evm).unwrap().as_str() == addr, || format!("address {case}"))?;
        }
    }

    let a0 = &v["agent_identity_0"];
    let payload = hex::decode(a0["payload_hex"].as_str().unwrap()).unwrap();
    let r = derive_identity_root(&MasterCredential::new(&payload, a0["domain"].as_str().unwrap()).unwrap()).unwrap();
    ensure(derive_agent(&r, 0).agent_id.as_str() == a0["agent_id"].as_str().unwrap(), || "agent 0".into())?;

    let mut one = [0u8; 32];
    one[31] = 1;
    let kp = DerivedKeypair::from_secp256k1_bytes(&one).unwrap();
    let addr = address_for(&kp, ChainNamespace::Evm).unwrap();
    ensure(addr.as_str() == "0x7E5F4552091A69125d5DfCb7b8C2659029395Bdf", || format!("scalar one {addr:?}"))?;
    ensure(addr.as_str() == v["evm_scalar_one"].as_str().unwrap(), || "scalar one vector".into())?;

    let seed: [u8; 32] = hex::decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
        .unwrap()
        .try_into()
        .unwrap();
    let kp = DerivedKeypair::from_ed25519_seed(&seed);
    ensure(
        hex::encode(kp.public_key()) == "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
        || "rfc 8032 public key".into(),
    )?;
    let sig = sign(&kp, b"").unwrap();
    ensure(
        sig.to_hex()
            == "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        || "rfc 8032 signature".into(),
    )?;
    ensure(verify(Curve::Ed25519, kp.public_key(), b"", &sig), || "rfc 8032 verify".into())?;

    let e = &v["eip712"];
    let value: CommitmentValue = serde_json::from_value(e["message"].clone()).unwrap();
    let rec = build(e["chain_id"].as_u64().unwrap(), &value, None).unwrap();
    ensure(hex::encode(eip712_digest(&rec)) == e["digest_hex"].as_str().unwrap(), || "eip712 digest".into())?;
    ensure(hex::encode(sha256(b"")) == v["sha256_empty"].as_str().unwrap(), || "sha256".into())?;

    let r = root(0x42, "collision-scan");
    let agent = AgentId::from("a1");
    let mut seen = HashSet::with_capacity(100_000);
    for i in 0..100_000u32 {
        let tx = format!("t{i}");
        let a = derive_address(&r, PrivacyLevel::Isolated, &agent, Direction::Outbound, "base", Some(&tx), None)
            .map_err(|e| e.to_string())?;
        ensure(seen.insert(a), || format!("collision at {tx}"))?;
    }
    Ok(format!("{} contextual keys, agent 0, scalar one, RFC 8032, EIP-712; 100000 contexts distinct", cases.len()))
}

// (f)

fn consolidation_randomness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let base = CONSOLIDATION_INTERVAL_MS;
    let lo = (base as f64 * (1.0 - CONSOLIDATION_JITTER_RATIO)) as u64;
    let hi = (base as f64 * (1.0 + CONSOLIDATION_JITTER_RATIO)) as u64;
    for _ in 0..10_000 {
        let d = next_consolidation_delay(base, CONSOLIDATION_JITTER_RATIO, rng.gen()).map_err(|e| e.to_string())?;
        ensure((lo..hi).contains(&d), || format!("delay {d} outside [{lo}, {hi})"))?;
    }
    for _ in 0..10_000 {
        let b: u64 = rng.gen_range(1..1_000_000_000);
        let rho: f64 = rng.gen_range(0.0..0.99);
        let d = next_consolidation_delay(b, rho, rng.gen_range(0.0..=1.0)).unwrap() as f64;
        let (l, h) = (b as f64 * (1.0 - rho), b as f64 * (1.0 + rho));
        ensure(d >= l.ceil() && d < h.max(l.ceil() + 1.0), || format!("base {b} rho {rho}: {d}"))?;
    }
    let r = root(6, "consolidation");
    let agent = AgentId::from("a1");
    let addrs: Vec<_> = (0..23)
        .map(|i| {
            let tx = format!("t{i}");
            derive_address(&r, PrivacyLevel::Isolated, &agent, Direction::Inbound, "base", Some(&tx), None).unwrap()
        })
        .collect();
    for seed in 0..200 {
        let plan = plan_consolidation(&addrs, 5, &mut ChaCha20Rng::seed_from_u64(seed), T0).unwrap();
        ensure(
            plan.inter_batch_delays_ms
                .iter()
                .all(|d| (INTER_BATCH_DELAY_MIN_MS..=INTER_BATCH_DELAY_MAX_MS).contains(d)),
            || format!("inter-batch delay out of band: {:?}", plan.inter_batch_delays_ms),
        )?;
    }

    let mut rng = ChaCha20Rng::seed_from_u64(2026);
    let mut counts = [0u64; 24];
    for _ in 0..100_000 {
        let mut a = [0usize, 1, 2, 3];
        fisher_yates_shuffle(&mut a, &mut rng);
        counts[permutation_rank(&a)] += 1;
    }
    let chi2 = chi_square_uniform(&counts);
    ensure(chi2 < CHI2_23_DF_99, || format!("chi2 {chi2:.2} >= {CHI2_23_DF_99:.2}"))?;
    Ok(format!("20000 jitter draws in band, inter-batch 10-60 min, chi2 {chi2:.2} < {CHI2_23_DF_99:.2}"))
}

// (g)

#[path = "../common/mod.rs"]
mod common;

async fn workload(seed: u64) -> Result<(), String> {
    let f = common::fixture_with(Arc::new(InMemoryStorage::new()), seed);
    let gw: Arc<Gateway> = f.gw.clone();
    let clock: Arc<ManualClock> = f.clock.clone();
    let agent = AgentId::from(common::AGENT);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    for i in 0..120u128 {
        match rng.gen_range(0..10) {
            0..=4 => {
                let mut a = common::action(i + 1, rng.gen_range(1..200));
                if rng.gen_bool(0.15) {
                    a.chain = "solana".into();
                }
                let g = gw.clone();
                tasks.push(tokio::spawn(async move { g.authorize(a, PrivacyLevel::Isolated).await }));
                tokio::task::yield_now().await;
            }
            5..=7 => {
                if let Some(r) = gw.queue().pending().first() {
                    let now = gw.now();
                    let v = ReviewVerdict::ALL[rng.gen_range(0..3)];
                    let modified = (v == ReviewVerdict::Modify).then(|| common::action(5_000 + i, rng.gen_range(1..200)));
                    let _ = gw.queue().respond(r.id, common::response(r.id, v, false, modified, now), now);
                }
            }
            8 => {
                clock.advance(rng.gen_range(0..REVIEW_DEADLINE_MS));
                gw.tick();
            }
            _ => {
                if rng.gen_bool(0.5) {
                    gw.freeze(&agent).map_err(|e| e.to_string())?;
                } else {
                    gw.unfreeze(&agent).map_err(|e| e.to_string())?;
                }
            }
        }
        tokio::task::yield_now().await;
    }
    clock.advance(2 * REVIEW_DEADLINE_MS);
    for t in tasks {
        // A late modify can open a fresh review, so keep expiring.
        while !t.is_finished() {
            clock.advance(REVIEW_DEADLINE_MS + 1);
            gw.tick();
            tokio::time::sleep(std::time::Duration::from_millis(1)).await;
        }
        let o = t.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
        if o.status == AuthorizeStatus::Executed {
            ensure(gw.verify_outcome(&o), || "executed outcome without a valid signature".into())?;
        }
    }
    ensure(gw.sovereignty_violations() == 0, || format!("seed {seed}: violation"))
}

fn sovereignty() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        for seed in 0..20 {
            workload(seed).await?;
        }
        for s in Scenario::ALL {
            let r = demo::run(s).await.map_err(|e| e.to_string())?;
            ensure(r.passed(), || format!("demo {} failed", s.name()))?;
        }
        Ok::<_, String>(())
    })?;
    let (executed, violations) = sovereignty_counters();
    ensure(executed > 0, || "nothing executed".into())?;
    ensure(violations == 0, || format!("{violations} executions without approval"))?;
    Ok(format!("{executed} executions across the run, 0 without approval"))
}
