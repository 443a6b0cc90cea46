use std::fmt;

use argon2::{Algorithm, Argon2, Params, Version};
use ed25519_dalek::{Signer as _, SigningKey as EdSigningKey, VerifyingKey as EdVerifyingKey};
use hkdf::Hkdf;
use k256::ecdsa::{
    RecoveryId, Signature as EcdsaSignature, SigningKey as EcdsaSigningKey,
    VerifyingKey as EcdsaVerifyingKey,
};
use k256::elliptic_curve::ops::Reduce;
use k256::{NonZeroScalar, Scalar, U256};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

use super::rng::RandomSource;
use super::{keccak256, CryptoError, Result};
use crate::constants::{
    ARGON2_ITERATIONS, ARGON2_MEMORY_KIB, ARGON2_PARALLELISM, HKDF_INFO_PREFIX,
    IDENTITY_ROOT_INFO,
};

/// The human principal's wallet credential: a 32-byte REV payload plus the
/// passphrase domain. Bytes `0..16` are the Argon2id salt, `16..32` the
/// entropy field.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct MasterCredential {
    rev_payload: [u8; 32],
    passphrase_domain: String,
}

impl MasterCredential {
    pub fn new(rev_payload: &[u8], passphrase_domain: impl Into<String>) -> Result<Self> {
        let rev_payload: [u8; 32] = rev_payload
            .try_into()
            .map_err(|_| CryptoError::PayloadLength(rev_payload.len()))?;
        Ok(Self {
            rev_payload,
            passphrase_domain: passphrase_domain.into(),
        })
    }

    fn salt(&self) -> &[u8] {
        &self.rev_payload[..16]
    }

    fn entropy(&self) -> &[u8] {
        &self.rev_payload[16..]
    }
}

impl fmt::Debug for MasterCredential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterCredential")
            .field("passphrase_domain", &self.passphrase_domain)
            .finish_non_exhaustive()
    }
}

/// Root secret from which every agent key and address is derived.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct IdentityRoot([u8; 32]);

impl IdentityRoot {
    /// SHA-256 of the root: a public commitment usable to compare roots.
    pub fn fingerprint(&self) -> [u8; 32] {
        super::sha256(&self.0)
    }

    fn expand(&self, info: &[u8]) -> Zeroizing<[u8; 32]> {
        let hk = Hkdf::<Sha256>::new(None, &self.0);
        let mut okm = Zeroizing::new([0u8; 32]);
        hk.expand(info, okm.as_mut())
            .expect("32 bytes is a valid HKDF-SHA256 output length");
        okm
    }
}

impl fmt::Debug for IdentityRoot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IdentityRoot({}..)", &hex::encode(self.fingerprint())[..8])
    }
}

/// `root = HKDF(Argon2id(passphrase_domain, salt(payload)), "acegf:identity:root")`.
///
/// The HKDF extract step is salted with the payload's entropy field so the
/// root depends on all 32 payload bytes.
pub fn derive_identity_root(cred: &MasterCredential) -> Result<IdentityRoot> {
    let params = Params::new(
        ARGON2_MEMORY_KIB,
        ARGON2_ITERATIONS,
        ARGON2_PARALLELISM,
        Some(32),
    )
    .map_err(|e| CryptoError::Kdf(e.to_string()))?;
    let argon = Argon2::new(Algorithm::Argon2id, Version::V0x13, params);
    let mut stretched = Zeroizing::new([0u8; 32]);
    argon
        .hash_password_into(
            cred.passphrase_domain.as_bytes(),
            cred.salt(),
            stretched.as_mut(),
        )
        .map_err(|e| CryptoError::Kdf(e.to_string()))?;
    let hk = Hkdf::<Sha256>::new(Some(cred.entropy()), stretched.as_ref());
    let mut root = [0u8; 32];
    hk.expand(IDENTITY_ROOT_INFO.as_bytes(), &mut root)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    Ok(IdentityRoot(root))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curve {
    Ed25519,
    Secp256k1,
    X25519,
}

impl Curve {
    pub fn name(self) -> &'static str {
        match self {
            Curve::Ed25519 => "ed25519",
            Curve::Secp256k1 => "secp256k1",
            Curve::X25519 => "x25519",
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone)]
enum SecretKey {
    Ed25519(EdSigningKey),
    Secp256k1(EcdsaSigningKey),
    X25519(x25519_dalek::StaticSecret),
}

/// A derived keypair. The private half is only usable through the signing
/// and key-agreement functions of this module.
#[derive(Clone)]
pub struct DerivedKeypair {
    curve: Curve,
    public_key: Vec<u8>,
    secret: SecretKey,
}

impl fmt::Debug for DerivedKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DerivedKeypair")
            .field("curve", &self.curve)
            .field("public_key", &hex::encode(&self.public_key))
            .finish_non_exhaustive()
    }
}

impl DerivedKeypair {
    pub fn curve(&self) -> Curve {
        self.curve
    }

    /// 32 bytes for ed25519/x25519, 33-byte compressed SEC1 for secp256k1.
    pub fn public_key(&self) -> &[u8] {
        &self.public_key
    }

    /// Imports an Ed25519 key from its 32-byte seed.
    pub fn from_ed25519_seed(seed: &[u8; 32]) -> Self {
        let sk = EdSigningKey::from_bytes(seed);
        Self {
            curve: Curve::Ed25519,
            public_key: sk.verifying_key().to_bytes().to_vec(),
            secret: SecretKey::Ed25519(sk),
        }
    }

    /// Imports a secp256k1 key; the bytes are reduced modulo the group order.
    pub fn from_secp256k1_bytes(bytes: &[u8; 32]) -> Result<Self> {
        let scalar = <Scalar as Reduce<U256>>::reduce_bytes(bytes.into());
        let nz = Option::<NonZeroScalar>::from(NonZeroScalar::new(scalar))
            .ok_or_else(|| CryptoError::Kdf("secp256k1 scalar reduced to zero".into()))?;
        let sk = EcdsaSigningKey::from(nz);
        Ok(Self {
            curve: Curve::Secp256k1,
            public_key: sk.verifying_key().to_sec1_bytes().to_vec(),
            secret: SecretKey::Secp256k1(sk),
        })
    }

    /// Imports an X25519 secret (clamped on use).
    pub fn from_x25519_secret(bytes: &[u8; 32]) -> Self {
        let secret = x25519_dalek::StaticSecret::from(*bytes);
        Self {
            curve: Curve::X25519,
            public_key: x25519_dalek::PublicKey::from(&secret).as_bytes().to_vec(),
            secret: SecretKey::X25519(secret),
        }
    }

    /// Fresh random keypair, for counterparties outside the principal's tree.
    pub fn generate(curve: Curve, rng: &dyn RandomSource) -> Result<Self> {
        let mut bytes = Zeroizing::new([0u8; 32]);
        rng.fill_bytes(bytes.as_mut());
        Self::from_bytes(curve, &bytes)
    }

    fn from_bytes(curve: Curve, bytes: &[u8; 32]) -> Result<Self> {
        match curve {
            Curve::Ed25519 => Ok(Self::from_ed25519_seed(bytes)),
            Curve::Secp256k1 => Self::from_secp256k1_bytes(bytes),
            Curve::X25519 => Ok(Self::from_x25519_secret(bytes)),
        }
    }

    pub(super) fn x25519_secret(&self) -> Result<&x25519_dalek::StaticSecret> {
        match &self.secret {
            SecretKey::X25519(s) => Ok(s),
            _ => Err(CryptoError::CurveMismatch {
                expected: "x25519",
                actual: self.curve.name(),
            }),
        }
    }

    fn ecdsa_key(&self) -> Result<&EcdsaSigningKey> {
        match &self.secret {
            SecretKey::Secp256k1(k) => Ok(k),
            _ => Err(CryptoError::CurveMismatch {
                expected: "secp256k1",
                actual: self.curve.name(),
            }),
        }
    }
}

/// `dk = HKDF-Expand(HKDF-Extract("", root), "ACEGF-REV32-V1-" ‖ curve ‖ ":" ‖ ctx, 32)`.
pub fn derive_contextual_keypair(
    root: &IdentityRoot,
    curve: Curve,
    ctx: &str,
) -> Result<DerivedKeypair> {
    if ctx.is_empty() {
        return Err(CryptoError::EmptyContext);
    }
    let info = format!("{HKDF_INFO_PREFIX}{}:{ctx}", curve.name());
    let dk = root.expand(info.as_bytes());
    DerivedKeypair::from_bytes(curve, &dk)
}

/// Symmetric AES-256-GCM key derived under a context, e.g. the audit key.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; 32]);

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// Ciphertext plus nonce produced by [`SymmetricKey::seal`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBox {
    pub nonce: String,
    pub ciphertext: String,
}

impl SymmetricKey {
    pub fn seal(&self, plaintext: &[u8], rng: &dyn RandomSource) -> SealedBox {
        use aes_gcm::aead::{Aead, KeyInit};
        use base64::Engine as _;
        let cipher = aes_gcm::Aes256Gcm::new_from_slice(&self.0).expect("32-byte key");
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut nonce);
        let ct = cipher
            .encrypt(&nonce.into(), plaintext)
            .expect("AES-GCM encryption of in-memory data cannot fail");
        SealedBox {
            nonce: hex::encode(nonce),
            ciphertext: base64::engine::general_purpose::STANDARD.encode(ct),
        }
    }

    pub fn open(&self, sealed: &SealedBox) -> Result<Vec<u8>> {
        use aes_gcm::aead::{Aead, KeyInit};
        use base64::Engine as _;
        let nonce: [u8; 12] = hex::decode(&sealed.nonce)
            .ok()
            .and_then(|n| n.try_into().ok())
            .ok_or_else(|| CryptoError::Malformed("nonce".into()))?;
        let ct = base64::engine::general_purpose::STANDARD
            .decode(&sealed.ciphertext)
            .map_err(|e| CryptoError::Malformed(e.to_string()))?;
        let cipher = aes_gcm::Aes256Gcm::new_from_slice(&self.0).expect("32-byte key");
        cipher
            .decrypt(&nonce.into(), ct.as_ref())
            .map_err(|_| CryptoError::Authentication)
    }
}

/// Symmetric key under info `"ACEGF-REV32-V1-aead:" ‖ ctx`.
pub fn derive_symmetric_key(root: &IdentityRoot, ctx: &str) -> Result<SymmetricKey> {
    if ctx.is_empty() {
        return Err(CryptoError::EmptyContext);
    }
    let info = format!("{HKDF_INFO_PREFIX}aead:{ctx}");
    Ok(SymmetricKey(*root.expand(info.as_bytes())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainNamespace {
    Evm,
    Ed25519Chain,
}

impl ChainNamespace {
    pub fn name(self) -> &'static str {
        match self {
            ChainNamespace::Evm => "evm",
            ChainNamespace::Ed25519Chain => "ed25519_chain",
        }
    }

    pub fn curve(self) -> Curve {
        match self {
            ChainNamespace::Evm => Curve::Secp256k1,
            ChainNamespace::Ed25519Chain => Curve::Ed25519,
        }
    }

    /// Maps a chain identifier to its address namespace. Solana-family chains
    /// use Ed25519 addresses; everything else is treated as EVM.
    pub fn for_chain(chain: &str) -> Self {
        if chain.to_ascii_lowercase().starts_with("solana") {
            ChainNamespace::Ed25519Chain
        } else {
            ChainNamespace::Evm
        }
    }
}

/// A chain address: EIP-55 checksummed hex for EVM, base58 for Ed25519 chains.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Parses a 0x-prefixed 20-byte hex address (any case).
    pub fn parse_evm(s: &str) -> Result<[u8; 20]> {
        let hex_part = s
            .strip_prefix("0x")
            .ok_or_else(|| CryptoError::Malformed(format!("address {s:?} lacks 0x prefix")))?;
        let bytes = hex::decode(hex_part)
            .map_err(|_| CryptoError::Malformed(format!("address {s:?} is not hex")))?;
        bytes
            .try_into()
            .map_err(|_| CryptoError::Malformed(format!("address {s:?} is not 20 bytes")))
    }

    /// EIP-55 checksummed form of a 20-byte address.
    pub fn evm_from_bytes(bytes: &[u8; 20]) -> Self {
        let lower = hex::encode(bytes);
        let digest = keccak256(lower.as_bytes());
        let mut out = String::with_capacity(42);
        out.push_str("0x");
        for (i, c) in lower.chars().enumerate() {
            let nibble = (digest[i / 2] >> (if i % 2 == 0 { 4 } else { 0 })) & 0x0f;
            if c.is_ascii_alphabetic() && nibble >= 8 {
                out.push(c.to_ascii_uppercase());
            } else {
                out.push(c);
            }
        }
        Address(out)
    }

    /// Wraps an arbitrary pre-rendered address string.
    pub fn from_raw(s: impl Into<String>) -> Self {
        Address(s.into())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn evm_address_of(vk: &EcdsaVerifyingKey) -> Address {
    let point = vk.to_encoded_point(false);
    let hash = keccak256(&point.as_bytes()[1..]);
    let mut addr = [0u8; 20];
    addr.copy_from_slice(&hash[12..]);
    Address::evm_from_bytes(&addr)
}

pub fn address_for(kp: &DerivedKeypair, namespace: ChainNamespace) -> Result<Address> {
    match (namespace, &kp.secret) {
        (ChainNamespace::Evm, SecretKey::Secp256k1(sk)) => Ok(evm_address_of(sk.verifying_key())),
        (ChainNamespace::Ed25519Chain, SecretKey::Ed25519(_)) => {
            Ok(Address(bs58::encode(&kp.public_key).into_string()))
        }
        _ => Err(CryptoError::NamespaceMismatch {
            curve: kp.curve.name(),
            namespace: namespace.name(),
        }),
    }
}

/// Ed25519 signatures are 64 bytes; secp256k1 signatures are 65 bytes
/// `r ‖ s ‖ v` with `v = 27 + recovery id`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "hex::serde")] Vec<u8>);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Signature(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

fn ecdsa_sign_prehash(sk: &EcdsaSigningKey, hash: &[u8; 32]) -> Signature {
    let (sig, recid) = sk
        .sign_prehash_recoverable(hash)
        .expect("prehash of 32 bytes is always signable");
    let mut bytes = sig.to_bytes().to_vec();
    bytes.push(27 + recid.to_byte());
    Signature(bytes)
}

/// Signs `message`. Ed25519 signs the raw bytes; secp256k1 signs `keccak256(message)`.
pub fn sign(kp: &DerivedKeypair, message: &[u8]) -> Result<Signature> {
    match &kp.secret {
        SecretKey::Ed25519(sk) => Ok(Signature(sk.sign(message).to_bytes().to_vec())),
        SecretKey::Secp256k1(sk) => Ok(ecdsa_sign_prehash(sk, &keccak256(message))),
        SecretKey::X25519(_) => Err(CryptoError::CurveMismatch {
            expected: "ed25519 or secp256k1",
            actual: "x25519",
        }),
    }
}

pub fn verify(curve: Curve, public_key: &[u8], message: &[u8], sig: &Signature) -> bool {
    match curve {
        Curve::Ed25519 => {
            let (Ok(pk), Ok(sig)) = (
                <[u8; 32]>::try_from(public_key),
                <[u8; 64]>::try_from(sig.as_bytes()),
            ) else {
                return false;
            };
            let Ok(vk) = EdVerifyingKey::from_bytes(&pk) else {
                return false;
            };
            vk.verify_strict(message, &ed25519_dalek::Signature::from_bytes(&sig))
                .is_ok()
        }
        Curve::Secp256k1 => {
            use k256::ecdsa::signature::hazmat::PrehashVerifier;
            if sig.as_bytes().len() != 65 {
                return false;
            }
            let Ok(vk) = EcdsaVerifyingKey::from_sec1_bytes(public_key) else {
                return false;
            };
            let Ok(s) = EcdsaSignature::from_slice(&sig.as_bytes()[..64]) else {
                return false;
            };
            if s.normalize_s().is_some() {
                // High-S signatures are malleated copies; never produced by `sign`.
                return false;
            }
            let Some(recid) = recovery_id(sig.as_bytes()[64]) else {
                return false;
            };
            let hash = keccak256(message);
            vk.verify_prehash(&hash, &s).is_ok()
                && EcdsaVerifyingKey::recover_from_prehash(&hash, &s, recid)
                    .map(|r| r == vk)
                    .unwrap_or(false)
        }
        Curve::X25519 => false,
    }
}

fn recovery_id(v: u8) -> Option<RecoveryId> {
    let raw = match v {
        27 | 28 => v - 27,
        0 | 1 => v,
        _ => return None,
    };
    RecoveryId::from_byte(raw)
}

/// Derives the secp256k1 key for `ctx` and signs a 32-byte EIP-712 digest
/// with a recoverable signature.
pub fn sign_typed_data_with_context(
    root: &IdentityRoot,
    ctx: &str,
    typed_data_hash: &[u8],
) -> Result<Signature> {
    let hash: [u8; 32] = typed_data_hash
        .try_into()
        .map_err(|_| CryptoError::HashLength(typed_data_hash.len()))?;
    let kp = derive_contextual_keypair(root, Curve::Secp256k1, ctx)?;
    Ok(ecdsa_sign_prehash(kp.ecdsa_key()?, &hash))
}

/// Recovers the EVM address that produced `sig` over a 32-byte digest.
pub fn recover_evm_address(hash: &[u8], sig: &Signature) -> Result<Address> {
    let hash: [u8; 32] = hash
        .try_into()
        .map_err(|_| CryptoError::HashLength(hash.len()))?;
    let bytes = sig.as_bytes();
    if bytes.len() != 65 {
        return Err(CryptoError::Malformed(format!(
            "recoverable signature must be 65 bytes, got {}",
            bytes.len()
        )));
    }
    let s = EcdsaSignature::from_slice(&bytes[..64])
        .map_err(|e| CryptoError::Malformed(e.to_string()))?;
    if s.normalize_s().is_some() {
        return Err(CryptoError::Malformed("high-S signature".into()));
    }
    let recid = recovery_id(bytes[64])
        .ok_or_else(|| CryptoError::Malformed(format!("bad recovery byte {}", bytes[64])))?;
    let vk = EcdsaVerifyingKey::recover_from_prehash(&hash, &s, recid)
        .map_err(|_| CryptoError::Authentication)?;
    Ok(evm_address_of(&vk))
}
