use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::Aes256Gcm;
use base64::{engine::general_purpose::STANDARD as B64, Engine as _};
use hkdf::Hkdf;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::Zeroizing;

use super::keys::DerivedKeypair;
use super::rng::RandomSource;
use super::{CryptoError, Result};
use crate::constants::{NEGOTIATION_KEY_INFO, NEGOTIATION_WIRE_VERSION};

pub const ENVELOPE_ALGORITHM: &str = "x25519-hkdf-sha256-aes-256-gcm";

/// Wire form of an encrypted negotiation message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedEnvelope {
    pub version: String,
    pub algorithm: String,
    /// Base64 (standard alphabet, padded).
    pub ciphertext: String,
    #[serde(with = "hex::serde")]
    pub nonce: Vec<u8>,
    pub message_id: String,
    pub timestamp: i64,
}

/// Replay identifier and send time; both are bound into the AEAD tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeMeta {
    pub message_id: String,
    pub timestamp: i64,
}

fn aad(version: &str, algorithm: &str, message_id: &str, timestamp: i64) -> Vec<u8> {
    format!("{version}|{algorithm}|{message_id}|{timestamp}").into_bytes()
}

/// Raw X25519 shared secret. Both keys must be on x25519.
pub fn diffie_hellman(own: &DerivedKeypair, peer_public: &[u8]) -> Result<[u8; 32]> {
    let secret = own.x25519_secret()?;
    let peer: [u8; 32] = peer_public
        .try_into()
        .map_err(|_| CryptoError::Malformed("x25519 public key must be 32 bytes".into()))?;
    let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(peer));
    if !shared.was_contributory() {
        return Err(CryptoError::Malformed("low-order x25519 public key".into()));
    }
    Ok(*shared.as_bytes())
}

fn message_cipher(own: &DerivedKeypair, peer_public: &[u8]) -> Result<Aes256Gcm> {
    let shared = Zeroizing::new(diffie_hellman(own, peer_public)?);
    // HKDF-Expand only: the shared secret is already uniformly distributed
    // enough to serve as the PRK for SHA-256.
    let hk = Hkdf::<Sha256>::from_prk(shared.as_ref()).expect("32-byte PRK is valid");
    let mut key = Zeroizing::new([0u8; 32]);
    hk.expand(NEGOTIATION_KEY_INFO.as_bytes(), key.as_mut())
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    Ok(Aes256Gcm::new_from_slice(key.as_ref()).expect("32-byte key"))
}

pub fn agree_and_encrypt(
    sender: &DerivedKeypair,
    recipient_public: &[u8],
    plaintext: &[u8],
    meta: EnvelopeMeta,
    rng: &dyn RandomSource,
) -> Result<EncryptedEnvelope> {
    let cipher = message_cipher(sender, recipient_public)?;
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let aad = aad(
        NEGOTIATION_WIRE_VERSION,
        ENVELOPE_ALGORITHM,
        &meta.message_id,
        meta.timestamp,
    );
    let ct = cipher
        .encrypt(
            &nonce.into(),
            Payload {
                msg: plaintext,
                aad: &aad,
            },
        )
        .expect("AES-GCM encryption of in-memory data cannot fail");
    Ok(EncryptedEnvelope {
        version: NEGOTIATION_WIRE_VERSION.to_string(),
        algorithm: ENVELOPE_ALGORITHM.to_string(),
        ciphertext: B64.encode(ct),
        nonce: nonce.to_vec(),
        message_id: meta.message_id,
        timestamp: meta.timestamp,
    })
}

pub fn decrypt(
    recipient: &DerivedKeypair,
    sender_public: &[u8],
    env: &EncryptedEnvelope,
) -> Result<Vec<u8>> {
    if env.version != NEGOTIATION_WIRE_VERSION {
        return Err(CryptoError::Malformed(format!(
            "unsupported envelope version {:?}",
            env.version
        )));
    }
    if env.algorithm != ENVELOPE_ALGORITHM {
        return Err(CryptoError::Malformed(format!(
            "unsupported envelope algorithm {:?}",
            env.algorithm
        )));
    }
    let nonce: [u8; 12] = env
        .nonce
        .as_slice()
        .try_into()
        .map_err(|_| CryptoError::Malformed("nonce must be 12 bytes".into()))?;
    let ct = B64
        .decode(&env.ciphertext)
        .map_err(|e| CryptoError::Malformed(e.to_string()))?;
    let cipher = message_cipher(recipient, sender_public)?;
    let aad = aad(&env.version, &env.algorithm, &env.message_id, env.timestamp);
    cipher
        .decrypt(
            &nonce.into(),
            Payload {
                msg: &ct,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::Authentication)
}
