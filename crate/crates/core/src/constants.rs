//! Protocol constants.
//!
//! Every tunable default used across the crate lives here so that the values
//! can be audited in one place and asserted against the published table.

/// HKDF info prefix for context-isolated derivation.
pub const HKDF_INFO_PREFIX: &str = "ACEGF-REV32-V1-";
/// HKDF info for the identity root.
pub const IDENTITY_ROOT_INFO: &str = "acegf:identity:root";

/// Argon2id memory cost in KiB (4 MiB).
pub const ARGON2_MEMORY_KIB: u32 = 4 * 1024;
/// Argon2id time cost.
pub const ARGON2_ITERATIONS: u32 = 3;
/// Argon2id lanes.
pub const ARGON2_PARALLELISM: u32 = 1;

/// Maximum depth of the delegation hierarchy below the human principal.
pub const MAX_HIERARCHY_DEPTH: usize = 5;

pub const SCOPE_RANK_AUTO_PAYMENT: u8 = 1;
pub const SCOPE_RANK_NEGOTIATION: u8 = 2;
pub const SCOPE_RANK_COMMITMENT: u8 = 3;
pub const SCOPE_RANK_FULL: u8 = 10;

pub const MAX_NEGOTIATION_ROUNDS: u32 = 10;
pub const NEGOTIATION_TTL_MS: i64 = 24 * 60 * 60 * 1000;

pub const REVIEW_DEADLINE_MS: i64 = 30 * 60 * 1000;

pub const ADDRESS_POOL_SIZE: usize = 5;
pub const CONSOLIDATION_INTERVAL_MS: u64 = 4 * 60 * 60 * 1000;
/// ±30% jitter on the consolidation interval.
pub const CONSOLIDATION_JITTER_RATIO: f64 = 0.3;
pub const CONSOLIDATION_BATCH_SIZE: usize = 5;
pub const INTER_BATCH_DELAY_MIN_MS: u64 = 10 * 60 * 1000;
pub const INTER_BATCH_DELAY_MAX_MS: u64 = 60 * 60 * 1000;

pub const AUDIT_BATCH_THRESHOLD: usize = 50;
pub const AUDIT_TIME_WINDOW_MS: i64 = 5 * 60 * 1000;

pub const EIP712_DOMAIN_NAME: &str = "YalletAgentCommitment";
pub const EIP712_DOMAIN_VERSION: &str = "1";

/// Micro-units per whole settlement unit.
pub const MICROS_PER_UNIT: u64 = 1_000_000;

pub const DAY_MS: i64 = 86_400_000;
pub const WEEK_MS: i64 = 7 * DAY_MS;

/// Storage key namespace.
pub const STORAGE_NAMESPACE: &str = "aesp:";

/// Wire version of negotiation envelopes.
pub const NEGOTIATION_WIRE_VERSION: &str = "aesp-neg/1";
/// HKDF info used to turn an X25519 shared secret into a message key.
pub const NEGOTIATION_KEY_INFO: &str = "aesp:negotiation:v1";

/// Derivation context of the owner's audit key.
pub const AUDIT_KEY_CONTEXT: &str = "audit:tags:v1";
