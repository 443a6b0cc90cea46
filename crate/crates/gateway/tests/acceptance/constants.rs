use aesp_core::constants::*;

use crate::{ensure, Outcome};

pub fn table() -> Outcome {
    const MIN: i64 = 60_000;
    const HOUR: i64 = 60 * MIN;
    let rows: [(&str, bool); 17] = [
        ("hierarchy depth 5", MAX_HIERARCHY_DEPTH == 5),
        (
            "scope ranks 1/2/3/10",
            [SCOPE_RANK_AUTO_PAYMENT, SCOPE_RANK_NEGOTIATION, SCOPE_RANK_COMMITMENT, SCOPE_RANK_FULL] == [1, 2, 3, 10],
        ),
        ("negotiation rounds 10", MAX_NEGOTIATION_ROUNDS == 10),
        ("negotiation ttl 24 h", NEGOTIATION_TTL_MS == 24 * HOUR),
        ("review deadline 30 min", REVIEW_DEADLINE_MS == 30 * MIN),
        ("address pool 5", ADDRESS_POOL_SIZE == 5),
        ("consolidation interval 4 h", CONSOLIDATION_INTERVAL_MS == 4 * HOUR as u64),
        ("jitter 30%", CONSOLIDATION_JITTER_RATIO == 0.3),
        ("batch 5", CONSOLIDATION_BATCH_SIZE == 5),
        ("inter-batch min 10 min", INTER_BATCH_DELAY_MIN_MS == 10 * MIN as u64),
        ("inter-batch max 60 min", INTER_BATCH_DELAY_MAX_MS == 60 * MIN as u64),
        ("audit batch 50", AUDIT_BATCH_THRESHOLD == 50),
        ("audit window 5 min", AUDIT_TIME_WINDOW_MS == 5 * MIN),
        ("domain name", EIP712_DOMAIN_NAME == "YalletAgentCommitment"),
        ("domain version", EIP712_DOMAIN_VERSION == "1"),
        ("argon2 memory 4 MiB", ARGON2_MEMORY_KIB == 4096),
        ("argon2 iterations 3", ARGON2_ITERATIONS == 3),
    ];
    let bad: Vec<_> = rows.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    ensure(bad.is_empty(), || format!("mismatched: {}", bad.join(", ")))?;
    Ok(format!("{} values match", rows.len()))
}
