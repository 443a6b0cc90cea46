#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use aesp_core::crypto::{derive_identity_root, IdentityRoot, MasterCredential, SeededRandom};
use aesp_core::identity::AgentId;
use aesp_core::policy::{ActionRequest, Policy, PolicyConditions, Scope};
use aesp_core::review::{ReviewRequest, ReviewResponse, ReviewVerdict};
use aesp_core::storage::{InMemoryStorage, StorageAdapter};
use aesp_gateway::demo::{DEMO_T0, U};
use aesp_gateway::{Gateway, ManualClock};
use uuid::Uuid;

pub const T0: i64 = DEMO_T0;
pub const AGENT: &str = "agent-a";
pub const PAYEE: &str = "0x00000000000000000000000000000000000000a1";
pub const POLICY_ID: u128 = 0xa;

pub fn root() -> IdentityRoot {
    derive_identity_root(&MasterCredential::new(&[9u8; 32], "gateway-tests").unwrap()).unwrap()
}

/// 100 units per transaction, 500 per day, base only, transfers to one payee.
pub fn conditions() -> PolicyConditions {
    PolicyConditions {
        max_amount_per_tx: Some(100 * U),
        max_amount_per_day: Some(500 * U),
        max_amount_per_week: None,
        max_amount_per_month: None,
        allow_list_addresses: vec![PAYEE.into()],
        allow_list_chains: vec!["base".into()],
        allow_list_methods: vec!["transfer".into()],
        time_window: None,
        min_balance_after: 10 * U,
        require_review_first_pay: false,
    }
}

pub fn policy(agent: &str) -> Policy {
    Policy {
        id: Uuid::from_u128(POLICY_ID),
        agent_id: AgentId::from(agent),
        owner_xid: "00".repeat(32),
        scope: Scope::AutoPayment,
        conditions: conditions(),
        created_at: T0 - 1,
        expires_at: T0 + 30 * 86_400_000,
    }
}

pub struct Fixture {
    pub gw: Arc<Gateway>,
    pub clock: Arc<ManualClock>,
}

pub fn fixture_with(storage: Arc<dyn StorageAdapter>, seed: u64) -> Fixture {
    let clock = Arc::new(ManualClock::new(T0));
    let gw = Gateway::builder(root())
        .storage(storage)
        .clock(clock.clone())
        .rng(Arc::new(SeededRandom::new(seed)))
        .build()
        .unwrap();
    gw.install_policy(policy(AGENT));
    Fixture { gw: Arc::new(gw), clock }
}

pub fn fixture() -> Fixture {
    fixture_with(Arc::new(InMemoryStorage::new()), 1)
}

pub fn action(id: u128, amount_units: u64) -> ActionRequest {
    ActionRequest {
        id: Uuid::from_u128(id),
        agent_id: AgentId::from(AGENT),
        amount: amount_units * U,
        to: PAYEE.into(),
        chain: "base".into(),
        method: "transfer".into(),
        timestamp: T0,
        current_balance: 1_000 * U,
    }
}

pub fn response(id: Uuid, verdict: ReviewVerdict, bio: bool, modified: Option<ActionRequest>, now: i64) -> ReviewResponse {
    ReviewResponse {
        request_id: id,
        verdict,
        modified_action: modified,
        biometric_confirmed: bio,
        responder: "owner".into(),
        timestamp: now,
    }
}

/// Polls until at least `n` reviews are pending.
pub async fn wait_pending(gw: &Gateway, n: usize) -> Vec<ReviewRequest> {
    for _ in 0..5_000 {
        let p = gw.queue().pending();
        if p.len() >= n {
            return p;
        }
        tokio::time::sleep(Duration::from_millis(1)).await;
    }
    panic!("timed out waiting for {n} pending reviews");
}
