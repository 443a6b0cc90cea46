//! Latency protocol: warm-ups discarded, fixed iterations per trial, median
//! and interquartile range over all timed iterations.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use aesp_core::commitment::{build, eip712_digest, CommitmentValue};
use aesp_core::crypto::{
    canonical_json, derive_contextual_keypair, derive_identity_root, derive_symmetric_key, sha256,
    sign, sign_typed_data_with_context, Curve, IdentityRoot, MasterCredential,
};
use aesp_core::identity::AgentId;
use aesp_core::policy::{ActionRequest, BudgetLedger, Policy, PolicyEngine};
use aesp_core::privacy::{derive_address, Direction, PrivacyLevel};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::corpus::{allowed_addresses, reference_policy, CORPUS_EPOCH_MS};

pub const WARMUPS: usize = 100;
pub const ITERATIONS: usize = 1000;
pub const TRIALS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    #[serde(rename = "policy_eval_8check")]
    PolicyEval8check,
    BudgetQuery,
    Ed25519Sign,
    Secp256k1Sign,
    Eip712Sign,
    HkdfDerive,
    Sha256Hash,
    EndToEndAuthorize,
}

impl BenchOp {
    pub const ALL: [BenchOp; 8] = [
        BenchOp::PolicyEval8check,
        BenchOp::BudgetQuery,
        BenchOp::Ed25519Sign,
        BenchOp::Secp256k1Sign,
        BenchOp::Eip712Sign,
        BenchOp::HkdfDerive,
        BenchOp::Sha256Hash,
        BenchOp::EndToEndAuthorize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::PolicyEval8check => "policy_eval_8check",
            BenchOp::BudgetQuery => "budget_query",
            BenchOp::Ed25519Sign => "ed25519_sign",
            BenchOp::Secp256k1Sign => "secp256k1_sign",
            BenchOp::Eip712Sign => "eip712_sign",
            BenchOp::HkdfDerive => "hkdf_derive",
            BenchOp::Sha256Hash => "sha256_hash",
            BenchOp::EndToEndAuthorize => "end_to_end_authorize",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchOp::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown bench op {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchProtocol {
    pub warmups: usize,
    pub iterations: usize,
    pub trials: usize,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        Self {
            warmups: WARMUPS,
            iterations: ITERATIONS,
            trials: TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpLatency {
    pub op: BenchOp,
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub p25_ms: f64,
    pub p75_ms: f64,
    pub trial_medians_ms: Vec<f64>,
    pub trials: usize,
    pub iterations: usize,
    pub warmups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub ops: Vec<OpLatency>,
}

impl LatencyReport {
    pub fn get(&self, op: BenchOp) -> Option<&OpLatency> {
        self.ops.iter().find(|o| o.op == op)
    }
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct Fixture {
    root: IdentityRoot,
    engine: PolicyEngine,
    policies: Vec<Policy>,
    ledger: BudgetLedger,
    agent: AgentId,
    request: ActionRequest,
    record_digest: [u8; 32],
}

impl Fixture {
    fn new() -> Self {
        let root = derive_identity_root(&MasterCredential::new(&[7u8; 32], "bench").unwrap())
            .expect("fixed credential derives");
        let agent = AgentId::from("agent-bench");
        let policy = reference_policy(Uuid::from_u128(1), agent.clone());
        let now = CORPUS_EPOCH_MS + 12 * 3_600_000;
        let mut ledger = BudgetLedger::new();
        // A month of history so the rolling sums have work to do.
        for d in 1..=30i64 {
            ledger.record_spend(&agent, 3_000_000, now - d * 86_400_000);
        }
        ledger.mark_paid(&agent, policy.id);
        let request = ActionRequest {
            id: Uuid::from_u128(2),
            agent_id: agent.clone(),
            amount: 5_000_000,
            to: allowed_addresses()[0].clone(),
            chain: "base".into(),
            method: "transfer".into(),
            timestamp: now,
            current_balance: 500_000_000,
        };
        let value = CommitmentValue {
            buyer_agent: "0x1111111111111111111111111111111111111111".into(),
            seller_agent: "0x2222222222222222222222222222222222222222".into(),
            item: "bench".into(),
            price: "5000000".into(),
            currency: "0x3333333333333333333333333333333333333333".into(),
            delivery_deadline: "1772496000".into(),
            arbitrator: "0x0000000000000000000000000000000000000000".into(),
            escrow_required: false,
            nonce: "1".into(),
        };
        let record = build(8453, &value, None).expect("valid commitment");
        Self {
            root,
            engine: PolicyEngine::with_checks(aesp_core::policy::CheckId::ALL),
            policies: vec![policy],
            ledger,
            agent,
            record_digest: eip712_digest(&record),
            request,
        }
    }

    fn run(&self, op: BenchOp, i: u64) {
        match op {
            BenchOp::PolicyEval8check => {
                let d = self.engine.evaluate(&self.request, &self.policies, &self.ledger, self.request.timestamp);
                assert!(d.is_approved());
                black_box(d);
            }
            BenchOp::BudgetQuery => {
                black_box(self.ledger.rolling_totals(&self.agent, self.request.timestamp));
            }
            BenchOp::Ed25519Sign => {
                let kp = self.ed_key();
                black_box(sign(&kp, black_box(&i.to_be_bytes())).unwrap());
            }
            BenchOp::Secp256k1Sign => {
                let kp = derive_contextual_keypair(&self.root, Curve::Secp256k1, "bench:secp:").unwrap();
                black_box(sign(&kp, black_box(&i.to_be_bytes())).unwrap());
            }
            BenchOp::Eip712Sign => {
                black_box(
                    sign_typed_data_with_context(&self.root, "commitment:buyer:", &self.record_digest).unwrap(),
                );
            }
            BenchOp::HkdfDerive => {
                black_box(derive_symmetric_key(&self.root, black_box("bench:hkdf:")).unwrap());
            }
            BenchOp::Sha256Hash => {
                black_box(sha256(black_box(&self.record_digest)));
            }
            BenchOp::EndToEndAuthorize => {
                let r = &self.request;
                let d = self.engine.evaluate(r, &self.policies, &self.ledger, r.timestamp);
                assert!(d.is_approved());
                let tx = Uuid::from_u64_pair(0, i).to_string();
                let addr = derive_address(
                    &self.root,
                    PrivacyLevel::Isolated,
                    &self.agent,
                    Direction::Outbound,
                    &r.chain,
                    Some(&tx),
                    Some(i),
                )
                .unwrap();
                let body = serde_json::json!({ "action": r, "decision_id": tx, "address": addr });
                let sig = sign(&self.ed_key(), &canonical_json(&body).unwrap()).unwrap();
                black_box((addr, sig));
            }
        }
    }

    fn ed_key(&self) -> aesp_core::crypto::DerivedKeypair {
        derive_contextual_keypair(&self.root, Curve::Ed25519, "bench:ed25519:").unwrap()
    }
}

/// Times each requested op under `protocol`. Ops run one after another on
/// the calling thread.
pub fn run_latency_bench(ops: &[BenchOp], protocol: BenchProtocol) -> LatencyReport {
    let fx = Fixture::new();
    let mut out = Vec::with_capacity(ops.len());
    for &op in ops {
        let mut all = Vec::with_capacity(protocol.iterations * protocol.trials);
        let mut trial_medians = Vec::with_capacity(protocol.trials);
        let mut i = 0u64;
        for _ in 0..protocol.trials {
            for _ in 0..protocol.warmups {
                fx.run(op, i);
                i += 1;
            }
            let mut samples = Vec::with_capacity(protocol.iterations);
            for _ in 0..protocol.iterations {
                let t = Instant::now();
                fx.run(op, i);
                samples.push(t.elapsed().as_secs_f64() * 1e3);
                i += 1;
            }
            samples.sort_by(f64::total_cmp);
            trial_medians.push(quantile(&samples, 0.5));
            all.extend(samples);
        }
        all.sort_by(f64::total_cmp);
        let (p25, p75) = (quantile(&all, 0.25), quantile(&all, 0.75));
        out.push(OpLatency {
            op,
            median_ms: quantile(&all, 0.5),
            iqr_ms: p75 - p25,
            p25_ms: p25,
            p75_ms: p75,
            trial_medians_ms: trial_medians,
            trials: protocol.trials,
            iterations: protocol.iterations,
            warmups: protocol.warmups,
        });
    }
    LatencyReport { ops: out }
}
