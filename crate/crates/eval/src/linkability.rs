//! Unlinkability experiment: isolated-level addresses on a toy UTXO ledger,
//! consolidated under three countermeasure settings and attacked by a
//! common-input plus temporal-proximity clustering adversary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use aesp_core::constants::{
    CONSOLIDATION_BATCH_SIZE, CONSOLIDATION_INTERVAL_MS, CONSOLIDATION_JITTER_RATIO,
};
use aesp_core::crypto::{derive_identity_root, uuid_from, MasterCredential, SeededRandom};
use aesp_core::identity::AgentId;
use aesp_core::privacy::{derive_address, next_consolidation_delay, plan_consolidation, Direction, PrivacyLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TX: usize = 1000;
pub const DEFAULT_AGENTS: usize = 5;
pub const HORIZON_MS: i64 = 48 * 3_600_000;
pub const DEFAULT_EPSILON_MS: i64 = 5 * 60_000;
pub const EPSILON_SWEEP_MIN: [i64; 5] = [1, 5, 10, 15, 30];
pub const CHAIN: &str = "base";
const MINUTE: i64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Countermeasures {
    /// One sweep of every spent address per principal.
    None,
    /// Jittered periodic consolidation, one transaction per cycle.
    JitterOnly,
    /// Jittered cycles, shuffled into batches with random inter-batch delays.
    #[serde(rename = "full_countermeasures")]
    Full,
}

impl Countermeasures {
    pub const ALL: [Countermeasures; 3] = [Countermeasures::None, Countermeasures::JitterOnly, Countermeasures::Full];

    pub fn name(self) -> &'static str {
        match self {
            Countermeasures::None => "none",
            Countermeasures::JitterOnly => "jitter_only",
            Countermeasures::Full => "full_countermeasures",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Countermeasures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Countermeasures {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Countermeasures::None),
            "jitter_only" | "jitter" => Ok(Countermeasures::JitterOnly),
            "full" | "full_countermeasures" => Ok(Countermeasures::Full),
            _ => Err(format!("unknown privacy config {s:?} (expected none, jitter_only or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Fund,
    Spend,
    Consolidate,
}

/// One toy-ledger transaction. Funding comes from fresh vault outputs and
/// spends pay fresh counterparty addresses, so only consolidations carry
/// more than one of the agent's addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTx {
    pub kind: TxKind,
    pub time: i64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payment {
    pub principal: usize,
    pub address: String,
    pub funded_at: i64,
    pub spent_at: i64,
}

/// The seeded workload shared by every configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub seed: u64,
    pub principals: usize,
    pub payments: Vec<Payment>,
}

pub fn generate_workload(seed: u64, n_tx: usize, principals: usize) -> Workload {
    assert!(principals > 0);
    let mut payload = [0u8; 32];
    payload[..8].copy_from_slice(&seed.to_be_bytes());
    let root = derive_identity_root(&MasterCredential::new(&payload, "linkability").expect("32-byte payload"))
        .expect("fixed credential derives");
    let ids = SeededRandom::new(seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let agents: Vec<AgentId> = (0..principals).map(|p| AgentId::new(format!("agent-{p}"))).collect();
    let mut seqs = vec![0u64; principals];
    let mut payments = Vec::with_capacity(n_tx);
    for _ in 0..n_tx {
        let p = rng.gen_range(0..principals);
        let tx = uuid_from(&ids).to_string();
        let address = derive_address(
            &root,
            PrivacyLevel::Isolated,
            &agents[p],
            Direction::Inbound,
            CHAIN,
            Some(&tx),
            Some(seqs[p]),
        )
        .expect("isolated derivation with tx id");
        seqs[p] += 1;
        let funded_at = rng.gen_range(0..HORIZON_MS);
        let spent_at = funded_at + rng.gen_range(MINUTE..=30 * MINUTE);
        payments.push(Payment {
            principal: p,
            address: address.to_string(),
            funded_at,
            spent_at,
        });
    }
    let distinct: HashSet<&str> = payments.iter().map(|p| p.address.as_str()).collect();
    assert_eq!(distinct.len(), payments.len(), "isolated addresses never repeat");
    Workload { seed, principals, payments }
}

/// Builds the toy ledger for one configuration.
pub fn simulate(workload: &Workload, config: Countermeasures) -> Vec<LedgerTx> {
    let mut rng = ChaCha20Rng::seed_from_u64(workload.seed);
    rng.set_stream(config.stream());
    let mut txs = Vec::new();
    for (i, p) in workload.payments.iter().enumerate() {
        txs.push(LedgerTx {
            kind: TxKind::Fund,
            time: p.funded_at,
            inputs: vec![format!("vault-out-{i}")],
            outputs: vec![p.address.clone()],
        });
        txs.push(LedgerTx {
            kind: TxKind::Spend,
            time: p.spent_at,
            inputs: vec![p.address.clone()],
            outputs: vec![format!("counterparty-{i}"), p.address.clone()],
        });
    }
    for principal in 0..workload.principals {
        let mut mine: Vec<&Payment> = workload.payments.iter().filter(|p| p.principal == principal).collect();
        mine.sort_by_key(|p| (p.spent_at, p.address.clone()));
        let vault = format!("vault-{principal}");
        match config {
            Countermeasures::None => {
                if mine.is_empty() {
                    continue;
                }
                let t = HORIZON_MS + rng.gen_range(0..CONSOLIDATION_INTERVAL_MS as i64);
                txs.push(consolidation(t, mine.iter().map(|p| p.address.clone()).collect(), &vault));
            }
            Countermeasures::JitterOnly | Countermeasures::Full => {
                let mut t = rng.gen_range(0..CONSOLIDATION_INTERVAL_MS as i64);
                let mut next = 0;
                while next < mine.len() {
                    let start = next;
                    while next < mine.len() && mine[next].spent_at <= t {
                        next += 1;
                    }
                    let pending: Vec<String> = mine[start..next].iter().map(|p| p.address.clone()).collect();
                    if !pending.is_empty() {
                        if config == Countermeasures::JitterOnly {
                            txs.push(consolidation(t, pending, &vault));
                        } else {
                            let addrs: Vec<_> = pending
                                .iter()
                                .map(|a| aesp_core::crypto::Address::from_raw(a.clone()))
                                .collect();
                            let plan = plan_consolidation(&addrs, CONSOLIDATION_BATCH_SIZE, &mut rng, t)
                                .expect("positive batch size");
                            for (batch, at) in plan.batches.iter().zip(plan.batch_times()) {
                                txs.push(consolidation(at, batch.iter().map(|a| a.to_string()).collect(), &vault));
                            }
                        }
                    }
                    let delay = next_consolidation_delay(
                        CONSOLIDATION_INTERVAL_MS,
                        CONSOLIDATION_JITTER_RATIO,
                        rng.gen::<f64>(),
                    )
                    .expect("jitter ratio in range");
                    t += delay as i64;
                }
            }
        }
    }
    txs.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.inputs.cmp(&b.inputs)));
    txs
}

fn consolidation(time: i64, inputs: Vec<String>, vault: &str) -> LedgerTx {
    LedgerTx {
        kind: TxKind::Consolidate,
        time,
        inputs,
        outputs: vec![vault.to_string()],
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Clusters ephemeral addresses: inputs of one consolidation are merged, and
/// consecutive consolidations at most `epsilon_ms` apart are merged.
pub fn cluster(workload: &Workload, ledger: &[LedgerTx], epsilon_ms: i64) -> Vec<usize> {
    let index: HashMap<&str, usize> = workload
        .payments
        .iter()
        .enumerate()
        .map(|(i, p)| (p.address.as_str(), i))
        .collect();
    let mut uf = UnionFind::new(workload.payments.len());
    let mut prev: Option<(i64, usize)> = None;
    for tx in ledger.iter().filter(|t| t.kind == TxKind::Consolidate) {
        let ids: Vec<usize> = tx.inputs.iter().filter_map(|a| index.get(a.as_str()).copied()).collect();
        let Some(&first) = ids.first() else { continue };
        for &i in &ids[1..] {
            uf.union(first, i);
        }
        if let Some((t, other)) = prev {
            if tx.time - t <= epsilon_ms {
                uf.union(other, first);
            }
        }
        prev = Some((tx.time, first));
    }
    (0..workload.payments.len()).map(|i| uf.find(i)).collect()
}

fn pairs(n: usize) -> u64 {
    (n as u64) * (n as u64).saturating_sub(1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linkage {
    pub linkage_rate: f64,
    pub precision: f64,
    pub true_pairs: u64,
    pub linked_pairs: u64,
    pub correct_pairs: u64,
    pub false_pairs: u64,
    pub clusters: usize,
    pub consolidation_txs: usize,
}

pub fn score(workload: &Workload, ledger: &[LedgerTx], epsilon_ms: i64) -> Linkage {
    let labels = cluster(workload, ledger, epsilon_ms);
    let mut by_cluster: HashMap<usize, usize> = HashMap::new();
    let mut by_cluster_principal: HashMap<(usize, usize), usize> = HashMap::new();
    let mut by_principal = vec![0usize; workload.principals];
    for (p, &c) in workload.payments.iter().zip(&labels) {
        *by_cluster.entry(c).or_default() += 1;
        *by_cluster_principal.entry((c, p.principal)).or_default() += 1;
        by_principal[p.principal] += 1;
    }
    let true_pairs: u64 = by_principal.iter().map(|&n| pairs(n)).sum();
    let linked_pairs: u64 = by_cluster.values().map(|&n| pairs(n)).sum();
    let correct_pairs: u64 = by_cluster_principal.values().map(|&n| pairs(n)).sum();
    Linkage {
        linkage_rate: if true_pairs == 0 { 0.0 } else { correct_pairs as f64 / true_pairs as f64 },
        precision: if linked_pairs == 0 { 1.0 } else { correct_pairs as f64 / linked_pairs as f64 },
        true_pairs,
        linked_pairs,
        correct_pairs,
        false_pairs: linked_pairs - correct_pairs,
        clusters: by_cluster.len(),
        consolidation_txs: ledger.iter().filter(|t| t.kind == TxKind::Consolidate).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon_min: i64,
    pub rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkabilityReport {
    pub seed: u64,
    pub n_tx: usize,
    pub principals: usize,
    pub epsilon_ms: i64,
    /// Keyed by configuration name.
    pub configs: BTreeMap<String, Linkage>,
    pub epsilon_sweep: Vec<EpsilonRow>,
}

impl LinkabilityReport {
    pub fn rate(&self, c: Countermeasures) -> f64 {
        self.configs[c.name()].linkage_rate
    }

    /// none > jitter_only > full at the report's epsilon.
    pub fn strictly_ordered(&self) -> bool {
        let (n, j, f) = (
            self.rate(Countermeasures::None),
            self.rate(Countermeasures::JitterOnly),
            self.rate(Countermeasures::Full),
        );
        n > j && j > f
    }
}

pub fn run_linkability(seed: u64, n_tx: usize, configs: &[Countermeasures]) -> LinkabilityReport {
    let workload = generate_workload(seed, n_tx, DEFAULT_AGENTS);
    let ledgers: Vec<(Countermeasures, Vec<LedgerTx>)> =
        configs.iter().map(|&c| (c, simulate(&workload, c))).collect();
    let configs_out = ledgers
        .iter()
        .map(|(c, l)| (c.name().to_string(), score(&workload, l, DEFAULT_EPSILON_MS)))
        .collect();
    let epsilon_sweep = EPSILON_SWEEP_MIN
        .iter()
        .map(|&m| EpsilonRow {
            epsilon_min: m,
            rates: ledgers
                .iter()
                .map(|(c, l)| (c.name().to_string(), score(&workload, l, m * MINUTE).linkage_rate))
                .collect(),
        })
        .collect();
    LinkabilityReport {
        seed,
        n_tx,
        principals: workload.principals,
        epsilon_ms: DEFAULT_EPSILON_MS,
        configs: configs_out,
        epsilon_sweep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_merges_transitively() {
        let mut u = UnionFind::new(4);
        u.union(0, 1);
        u.union(2, 3);
        assert_ne!(u.find(1), u.find(2));
        u.union(1, 3);
        assert_eq!(u.find(0), u.find(2));
    }

    #[test]
    fn pair_counting() {
        assert_eq!(pairs(0), 0);
        assert_eq!(pairs(1), 0);
        assert_eq!(pairs(5), 10);
    }

    #[test]
    fn every_address_is_consolidated_once() {
        let w = generate_workload(4, 200, 5);
        for c in Countermeasures::ALL {
            let l = simulate(&w, c);
            let mut seen: Vec<&str> = l
                .iter()
                .filter(|t| t.kind == TxKind::Consolidate)
                .flat_map(|t| t.inputs.iter().map(String::as_str))
                .collect();
            seen.sort();
            let mut want: Vec<&str> = w.payments.iter().map(|p| p.address.as_str()).collect();
            want.sort();
            assert_eq!(seen, want, "{c}");
            // Consolidation never precedes the spend it sweeps.
            let spent: HashMap<&str, i64> = w.payments.iter().map(|p| (p.address.as_str(), p.spent_at)).collect();
            for t in l.iter().filter(|t| t.kind == TxKind::Consolidate) {
                assert!(t.inputs.iter().all(|a| spent[a.as_str()] <= t.time));
            }
        }
    }

    #[test]
    fn batches_respect_size() {
        let w = generate_workload(5, 300, 5);
        let l = simulate(&w, Countermeasures::Full);
        assert!(l
            .iter()
            .filter(|t| t.kind == TxKind::Consolidate)
            .all(|t| t.inputs.len() <= CONSOLIDATION_BATCH_SIZE));
    }
}
