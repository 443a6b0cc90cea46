//! Cryptographic substrate.
//!
//! Deterministic Argon2id→HKDF identity roots, context-isolated keypairs on
//! three curves, chain addresses, signatures, X25519 key agreement with
//! AES-256-GCM envelopes, passphrase sealing and canonical JSON hashing.
//!
//! Secret material is held only inside [`IdentityRoot`], [`DerivedKeypair`]
//! and [`SymmetricKey`]. None of these types expose their secret bytes, none
//! implement `Serialize`, and all of them wipe their buffers on drop.

pub mod canonical;
mod envelope;
mod keys;
pub mod rng;
mod seal;

pub use canonical::{canonical_json, canonical_json_value, canonical_string};
pub use envelope::{
    agree_and_encrypt, decrypt, diffie_hellman, EncryptedEnvelope, EnvelopeMeta,
    ENVELOPE_ALGORITHM,
};
pub use keys::{
    address_for, derive_contextual_keypair, derive_identity_root, derive_symmetric_key,
    recover_evm_address, sign, sign_typed_data_with_context, verify, Address, ChainNamespace,
    Curve, DerivedKeypair, IdentityRoot, MasterCredential, SealedBox, Signature, SymmetricKey,
};
pub use rng::{uuid_from, OsRandom, RandomSource, SeededRandom};
pub use seal::{seal_secret, unseal_secret, SealedBlob, SEAL_ALGORITHM};

use sha2::{Digest, Sha256};
use sha3::Keccak256;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("REV payload must be 32 bytes, got {0}")]
    PayloadLength(usize),
    #[error("derivation context must not be empty")]
    EmptyContext,
    #[error("curve {curve} cannot produce a {namespace} address")]
    NamespaceMismatch {
        curve: &'static str,
        namespace: &'static str,
    },
    #[error("operation requires a {expected} key, got {actual}")]
    CurveMismatch {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("typed data hash must be 32 bytes, got {0}")]
    HashLength(usize),
    #[error("authentication failed")]
    Authentication,
    #[error("value is not serializable as canonical JSON: {0}")]
    NotSerializable(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("key derivation failed: {0}")]
    Kdf(String),
}

pub type Result<T> = std::result::Result<T, CryptoError>;

/// SHA-256 digest.
pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Keccak-256 digest (the pre-standard SHA-3 padding used by Ethereum).
pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}
