//! Seeded request corpus: single-condition attacks stratified over the eight
//! checks, aggregate budget bursts and log-normal legitimate traffic.

use std::collections::BTreeMap;

use aesp_core::constants::{DAY_MS, MICROS_PER_UNIT};
use aesp_core::crypto::sha256;
use aesp_core::identity::AgentId;
use aesp_core::policy::{
    ActionRequest, BudgetLedger, CheckId, Policy, PolicyConditions, Scope, TimeWindow,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

const U: u64 = MICROS_PER_UNIT;
const HOUR_MS: i64 = 3_600_000;
const MINUTE_MS: i64 = 60_000;

/// 2026-03-02T00:00:00Z, a Monday.
pub const CORPUS_EPOCH_MS: i64 = 1_772_409_600_000;
/// Days covered by the corpus timeline.
pub const HORIZON_DAYS: i64 = 168;

pub const SINGLE_ATTACKS: usize = 950;
pub const AGGREGATE_BURSTS: usize = 10;
pub const BURST_LEN: usize = 5;
pub const BURST_AMOUNT: u64 = 99 * U;
pub const LEGITIMATE: usize = 500;

pub const ALLOWED_CHAINS: [&str; 3] = ["base", "ethereum", "polygon"];
pub const ALLOWED_METHODS: [&str; 4] = ["transfer", "approve", "swap", "pay_invoice"];
const BLOCKED_CHAINS: [&str; 3] = ["arbitrum", "optimism", "solana"];
const BLOCKED_METHODS: [&str; 3] = ["mint", "bridge", "delegate"];

pub const LEGIT_AGENT: &str = "agent-main";

// Fixed days for the budget stratum. Each sub-agent exhausts a different window.
const S8_DAY_DAY: i64 = 120;
const S8_WEEK_DAY: i64 = 100;
const S8_MONTH_FIRST: i64 = 30; // 2026-04-01
const S8_MONTH_ATTACK_DAYS: [i64; 3] = [57, 58, 59]; // 2026-04-28..30

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    AttackSingle,
    AttackAggregate,
    Legitimate,
}

impl Label {
    pub fn is_attack(self) -> bool {
        self != Label::Legitimate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRequest {
    pub request: ActionRequest,
    pub label: Label,
    /// The check an `attack_single` request is built to violate.
    pub stratum: Option<CheckId>,
}

/// A spend that predates the corpus timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorSpend {
    pub agent_id: AgentId,
    pub amount: u64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub policies: Vec<Policy>,
    pub prior_spends: Vec<PriorSpend>,
    /// Agents whose first payment under their policy is already on record.
    pub paid_agents: Vec<AgentId>,
    pub requests: Vec<CorpusRequest>,
}

impl Corpus {
    pub fn policies_for(&self, agent: &AgentId) -> Vec<Policy> {
        self.policies.iter().filter(|p| &p.agent_id == agent).cloned().collect()
    }

    /// Policies grouped by agent.
    pub fn policy_map(&self) -> BTreeMap<AgentId, Vec<Policy>> {
        let mut m: BTreeMap<AgentId, Vec<Policy>> = BTreeMap::new();
        for p in &self.policies {
            m.entry(p.agent_id.clone()).or_default().push(p.clone());
        }
        m
    }

    /// Ledger state at the start of the timeline.
    pub fn initial_ledger(&self) -> BudgetLedger {
        let mut l = BudgetLedger::new();
        for s in &self.prior_spends {
            l.record_spend(&s.agent_id, s.amount, s.timestamp);
        }
        for a in &self.paid_agents {
            for p in self.policies.iter().filter(|p| &p.agent_id == a) {
                l.mark_paid(a, p.id);
            }
        }
        l
    }

    pub fn count(&self, label: Label) -> usize {
        self.requests.iter().filter(|r| r.label == label).count()
    }

    pub fn stratum_counts(&self) -> BTreeMap<u8, usize> {
        let mut m = BTreeMap::new();
        for r in &self.requests {
            if let Some(s) = r.stratum {
                *m.entry(s.number()).or_default() += 1;
            }
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// The ten allowlisted recipients.
pub fn allowed_addresses() -> Vec<String> {
    (0..10).map(|i| pseudo_address("allowed", i)).collect()
}

fn pseudo_address(kind: &str, i: usize) -> String {
    let h = sha256(format!("aesp-corpus:{kind}:{i}").as_bytes());
    format!("0x{}", hex_lower(&h[..20]))
}

fn hex_lower(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

/// Reference conditions: 100 / 500 / 2000 / 5000 units, 09:00–21:00,
/// 10 units minimum balance, first payment reviewed.
pub fn reference_conditions() -> PolicyConditions {
    PolicyConditions {
        max_amount_per_tx: Some(100 * U),
        max_amount_per_day: Some(500 * U),
        max_amount_per_week: Some(2_000 * U),
        max_amount_per_month: Some(5_000 * U),
        allow_list_addresses: allowed_addresses(),
        allow_list_chains: ALLOWED_CHAINS.iter().map(|s| s.to_string()).collect(),
        allow_list_methods: ALLOWED_METHODS.iter().map(|s| s.to_string()).collect(),
        time_window: Some(TimeWindow::new("09:00", "21:00").expect("valid window")),
        min_balance_after: 10 * U,
        require_review_first_pay: true,
    }
}

pub fn reference_policy(id: Uuid, agent: AgentId) -> Policy {
    Policy {
        id,
        agent_id: agent,
        owner_xid: "00".repeat(32),
        scope: Scope::AutoPayment,
        conditions: reference_conditions(),
        created_at: CORPUS_EPOCH_MS - 30 * DAY_MS,
        expires_at: CORPUS_EPOCH_MS + 365 * DAY_MS,
    }
}

fn stratum_agent(s: CheckId) -> AgentId {
    AgentId::new(format!("attacker-s{}", s.number()))
}

const S8_AGENTS: [&str; 3] = ["attacker-s8-day", "attacker-s8-week", "attacker-s8-month"];

struct Gen {
    rng: ChaCha20Rng,
    allowed: Vec<String>,
}

impl Gen {
    fn uuid(&mut self) -> Uuid {
        uuid::Builder::from_random_bytes(self.rng.gen()).into_uuid()
    }

    fn pick<'a>(&mut self, xs: &'a [&'a str]) -> &'a str {
        xs.choose(&mut self.rng).expect("non-empty")
    }

    fn allowed_to(&mut self) -> String {
        self.allowed.choose(&mut self.rng).expect("non-empty").clone()
    }

    fn day_start(day: i64) -> i64 {
        CORPUS_EPOCH_MS + day * DAY_MS
    }

    /// Uniform time in `[from, to)` of `day`, millisecond offsets from midnight.
    fn time_in(&mut self, day: i64, from: i64, to: i64) -> i64 {
        Self::day_start(day) + self.rng.gen_range(from..to)
    }

    fn in_window(&mut self, day: i64) -> i64 {
        self.time_in(day, 9 * HOUR_MS, 21 * HOUR_MS)
    }

    /// A request passing every check of the reference policy for an agent
    /// with clean history and a first payment on record.
    fn compliant(&mut self, agent: &AgentId, day: i64) -> ActionRequest {
        let amount = self.rng.gen_range(U..=90 * U);
        ActionRequest {
            id: self.uuid(),
            agent_id: agent.clone(),
            amount,
            to: self.allowed_to(),
            chain: self.pick(&ALLOWED_CHAINS).to_string(),
            method: self.pick(&ALLOWED_METHODS).to_string(),
            timestamp: self.in_window(day),
            current_balance: amount + self.rng.gen_range(20 * U..2_000 * U),
        }
    }

    fn single(&mut self, s: CheckId, n: usize, out: &mut Vec<CorpusRequest>, prior: &mut Vec<PriorSpend>) {
        if s == CheckId::Budget {
            self.budget_stratum(n, out, prior);
            return;
        }
        let agent = stratum_agent(s);
        for i in 0..n {
            let day = self.rng.gen_range(0..HORIZON_DAYS);
            let mut r = self.compliant(&agent, day);
            match s {
                CheckId::AmountPerTx => {
                    r.amount = self.rng.gen_range(100 * U + 1..=250 * U);
                    r.current_balance = r.amount + self.rng.gen_range(20 * U..2_000 * U);
                }
                CheckId::TimeWindow => {
                    // (21:00, 09:00) exclusive, wrapping midnight.
                    let start = 21 * HOUR_MS + MINUTE_MS;
                    let span = 12 * HOUR_MS - 2 * MINUTE_MS;
                    let t = (start + self.rng.gen_range(0..span)).rem_euclid(DAY_MS);
                    r.timestamp = Self::day_start(day) + t;
                }
                CheckId::AddressAllowlist => r.to = pseudo_address("blocked", i % 25),
                CheckId::ChainAllowlist => r.chain = self.pick(&BLOCKED_CHAINS).to_string(),
                CheckId::MethodAllowlist => r.method = self.pick(&BLOCKED_METHODS).to_string(),
                CheckId::FirstPayment => {}
                CheckId::MinBalance => {
                    r.current_balance = r.amount + self.rng.gen_range(0..10 * U);
                }
                CheckId::Budget => unreachable!(),
            }
            out.push(CorpusRequest {
                request: r,
                label: Label::AttackSingle,
                stratum: Some(s),
            });
        }
    }

    /// Budget violations split over three agents whose prior spending has
    /// nearly exhausted the day, week and month limit respectively.
    fn budget_stratum(&mut self, n: usize, out: &mut Vec<CorpusRequest>, prior: &mut Vec<PriorSpend>) {
        let day_agent = AgentId::from(S8_AGENTS[0]);
        let week_agent = AgentId::from(S8_AGENTS[1]);
        let month_agent = AgentId::from(S8_AGENTS[2]);
        prior.push(PriorSpend {
            agent_id: day_agent.clone(),
            amount: 450 * U,
            timestamp: Self::day_start(S8_DAY_DAY) + 8 * HOUR_MS,
        });
        for d in S8_WEEK_DAY - 6..S8_WEEK_DAY {
            prior.push(PriorSpend {
                agent_id: week_agent.clone(),
                amount: 330 * U,
                timestamp: Self::day_start(d) + 8 * HOUR_MS,
            });
        }
        for d in S8_MONTH_FIRST..S8_MONTH_FIRST + 20 {
            prior.push(PriorSpend {
                agent_id: month_agent.clone(),
                amount: 247 * U + U / 2,
                timestamp: Self::day_start(d) + 8 * HOUR_MS,
            });
        }
        for i in 0..n {
            let (agent, day) = match i % 3 {
                0 => (&day_agent, S8_DAY_DAY),
                1 => (&week_agent, S8_WEEK_DAY),
                _ => {
                    let d = *S8_MONTH_ATTACK_DAYS.choose(&mut self.rng).expect("non-empty");
                    (&month_agent, d)
                }
            };
            let mut r = self.compliant(agent, day);
            r.amount = self.rng.gen_range(50 * U + 1..=100 * U);
            r.current_balance = r.amount + self.rng.gen_range(20 * U..2_000 * U);
            out.push(CorpusRequest {
                request: r,
                label: Label::AttackSingle,
                stratum: Some(CheckId::Budget),
            });
        }
    }
}

/// Burst start days; the following day is kept free of legitimate traffic
/// so the drained budget only affects the burst itself.
pub fn burst_days() -> Vec<i64> {
    (0..AGGREGATE_BURSTS as i64).map(|k| 8 + 16 * k).collect()
}

const BURST_START_MS: i64 = 20 * HOUR_MS;
const ANCHOR_END_MS: i64 = 19 * HOUR_MS + 30 * MINUTE_MS;

pub fn generate_corpus(seed: u64) -> Corpus {
    let mut g = Gen {
        rng: ChaCha20Rng::seed_from_u64(seed),
        allowed: allowed_addresses(),
    };
    let legit_agent = AgentId::from(LEGIT_AGENT);
    let mut agents: Vec<AgentId> = vec![legit_agent.clone()];
    agents.extend(CheckId::ALL.iter().filter(|&&s| s != CheckId::Budget).map(|&s| stratum_agent(s)));
    agents.extend(S8_AGENTS.iter().map(|&a| AgentId::from(a)));
    let policies: Vec<Policy> = agents
        .iter()
        .map(|a| reference_policy(g.uuid(), a.clone()))
        .collect();
    let paid_agents: Vec<AgentId> = agents
        .iter()
        .filter(|a| **a != legit_agent && **a != stratum_agent(CheckId::FirstPayment))
        .cloned()
        .collect();

    let mut requests = Vec::with_capacity(SINGLE_ATTACKS + AGGREGATE_BURSTS * BURST_LEN + LEGITIMATE);
    let mut prior_spends = Vec::new();

    // Legitimate amounts first, so anchors can be chosen among them.
    let lognormal = LogNormal::new(5f64.ln(), 1.0).expect("valid parameters");
    let amounts: Vec<u64> = (0..LEGITIMATE)
        .map(|_| {
            let units = lognormal.sample(&mut g.rng).clamp(0.01, 100.0);
            (units * U as f64).round() as u64
        })
        .collect();
    let bursts = burst_days();
    let mut eligible: Vec<usize> = (0..LEGITIMATE).filter(|&i| amounts[i] >= 6 * U).collect();
    eligible.shuffle(&mut g.rng);
    let anchors: BTreeMap<usize, i64> = eligible.into_iter().zip(bursts.iter().copied()).collect();
    let quiet: Vec<i64> = bursts.iter().map(|d| d + 1).collect();
    let legit_days: Vec<i64> = (0..HORIZON_DAYS).filter(|d| !quiet.contains(d)).collect();
    for (i, &amount) in amounts.iter().enumerate() {
        let day = match anchors.get(&i) {
            Some(&d) => d,
            None => *legit_days.choose(&mut g.rng).expect("non-empty"),
        };
        let timestamp = if bursts.contains(&day) {
            g.time_in(day, 9 * HOUR_MS, ANCHOR_END_MS)
        } else {
            g.in_window(day)
        };
        let req = ActionRequest {
            id: g.uuid(),
            agent_id: legit_agent.clone(),
            amount,
            to: g.allowed_to(),
            chain: g.pick(&ALLOWED_CHAINS).to_string(),
            method: g.pick(&ALLOWED_METHODS).to_string(),
            timestamp,
            current_balance: amount + 10 * U + g.rng.gen_range(0..2_000 * U),
        };
        requests.push(CorpusRequest {
            request: req,
            label: Label::Legitimate,
            stratum: None,
        });
    }

    for &day in &bursts {
        for j in 0..BURST_LEN {
            let req = ActionRequest {
                id: g.uuid(),
                agent_id: legit_agent.clone(),
                amount: BURST_AMOUNT,
                to: g.allowed_to(),
                chain: g.pick(&ALLOWED_CHAINS).to_string(),
                method: g.pick(&ALLOWED_METHODS).to_string(),
                timestamp: Gen::day_start(day) + BURST_START_MS + j as i64 * MINUTE_MS,
                current_balance: 5_000 * U + g.rng.gen_range(0..1_000 * U),
            };
            requests.push(CorpusRequest {
                request: req,
                label: Label::AttackAggregate,
                stratum: None,
            });
        }
    }

    // 119 per stratum except two seeded strata with 118.
    let mut short: Vec<CheckId> = CheckId::ALL.to_vec();
    short.shuffle(&mut g.rng);
    let short = &short[..2];
    for s in CheckId::ALL {
        let n = if short.contains(&s) { 118 } else { 119 };
        g.single(s, n, &mut requests, &mut prior_spends);
    }

    requests.sort_by_key(|r| r.request.timestamp);
    Corpus {
        seed,
        policies,
        prior_spends,
        paid_agents,
        requests,
    }
}
