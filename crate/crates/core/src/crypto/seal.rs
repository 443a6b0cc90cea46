//! Passphrase sealing of long-lived secrets at rest.

use aes_gcm_siv::aead::{Aead, KeyInit};
use aes_gcm_siv::Aes256GcmSiv;
use argon2::{Algorithm, Argon2, Params, Version};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::rng::RandomSource;
use super::{CryptoError, Result};
use crate::constants::{ARGON2_ITERATIONS, ARGON2_MEMORY_KIB, ARGON2_PARALLELISM};

pub const SEAL_ALGORITHM: &str = "argon2id-aes-256-gcm-siv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBlob {
    pub algorithm: String,
    #[serde(with = "hex::serde")]
    pub salt: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub nonce: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub ciphertext: Vec<u8>,
}

fn passphrase_key(passphrase: &str, salt: &[u8]) -> Result<Zeroizing<[u8; 32]>> {
    let params = Params::new(
        ARGON2_MEMORY_KIB,
        ARGON2_ITERATIONS,
        ARGON2_PARALLELISM,
        Some(32),
    )
    .map_err(|e| CryptoError::Kdf(e.to_string()))?;
    let mut key = Zeroizing::new([0u8; 32]);
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase.as_bytes(), salt, key.as_mut())
        .map_err(|e| CryptoError::Kdf(e.to_string()))?;
    Ok(key)
}

pub fn seal_secret(secret: &[u8], passphrase: &str, rng: &dyn RandomSource) -> Result<SealedBlob> {
    let mut salt = [0u8; 16];
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut salt);
    rng.fill_bytes(&mut nonce);
    let key = passphrase_key(passphrase, &salt)?;
    let cipher = Aes256GcmSiv::new_from_slice(key.as_ref()).expect("32-byte key");
    let ciphertext = cipher
        .encrypt(&nonce.into(), secret)
        .expect("AES-GCM-SIV encryption of in-memory data cannot fail");
    Ok(SealedBlob {
        algorithm: SEAL_ALGORITHM.to_string(),
        salt: salt.to_vec(),
        nonce: nonce.to_vec(),
        ciphertext,
    })
}

pub fn unseal_secret(blob: &SealedBlob, passphrase: &str) -> Result<Zeroizing<Vec<u8>>> {
    if blob.algorithm != SEAL_ALGORITHM {
        return Err(CryptoError::Malformed(format!(
            "unsupported seal algorithm {:?}",
            blob.algorithm
        )));
    }
    let nonce: [u8; 12] = blob
        .nonce
        .as_slice()
        .try_into()
        .map_err(|_| CryptoError::Malformed("nonce must be 12 bytes".into()))?;
    let key = passphrase_key(passphrase, &blob.salt)?;
    let cipher = Aes256GcmSiv::new_from_slice(key.as_ref()).expect("32-byte key");
    cipher
        .decrypt(&nonce.into(), blob.ciphertext.as_ref())
        .map(Zeroizing::new)
        .map_err(|_| CryptoError::Authentication)
}
