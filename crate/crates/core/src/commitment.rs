//! Dual-signed EIP-712 commitments and their lifecycle.
//!
//! A record carries two hashes. `commitment_hash` is SHA-256 over the
//! canonical JSON of `{domain, value}` and identifies the record.
//! [`eip712_digest`] is the Keccak-256 typed-data digest that both parties
//! actually sign.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{EIP712_DOMAIN_NAME, EIP712_DOMAIN_VERSION};
use crate::crypto::{
    canonical_json, keccak256, recover_evm_address, sha256, sign_typed_data_with_context,
    Address, CryptoError, IdentityRoot, RandomSource, Signature,
};

pub const COMMITMENT_TYPE: &str = "Commitment(address buyerAgent,address sellerAgent,string item,uint256 price,address currency,uint256 deliveryDeadline,address arbitrator,bool escrowRequired,uint256 nonce)";
pub const DOMAIN_TYPE: &str = "EIP712Domain(string name,string version,uint256 chainId)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitmentValue {
    pub buyer_agent: String,
    pub seller_agent: String,
    pub item: String,
    /// uint256 as a decimal string.
    pub price: String,
    pub currency: String,
    /// uint256 seconds since epoch, decimal string.
    pub delivery_deadline: String,
    pub arbitrator: String,
    pub escrow_required: bool,
    /// uint256, decimal string, nonzero.
    pub nonce: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitmentDomain {
    pub name: String,
    pub version: String,
    pub chain_id: u64,
}

impl CommitmentDomain {
    pub fn new(chain_id: u64) -> Self {
        Self {
            name: EIP712_DOMAIN_NAME.to_string(),
            version: EIP712_DOMAIN_VERSION.to_string(),
            chain_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitmentState {
    Draft,
    Proposed,
    BuyerSigned,
    FullySigned,
    Escrowed,
    Delivered,
    Completed,
    Disputed,
    Cancelled,
}

impl CommitmentState {
    pub const ALL: [CommitmentState; 9] = [
        CommitmentState::Draft,
        CommitmentState::Proposed,
        CommitmentState::BuyerSigned,
        CommitmentState::FullySigned,
        CommitmentState::Escrowed,
        CommitmentState::Delivered,
        CommitmentState::Completed,
        CommitmentState::Disputed,
        CommitmentState::Cancelled,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleEvent {
    Propose,
    BuyerSign,
    SellerSign,
    EscrowFunded,
    Delivered,
    Released,
    Dispute,
    Cancel,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 8] = [
        LifecycleEvent::Propose,
        LifecycleEvent::BuyerSign,
        LifecycleEvent::SellerSign,
        LifecycleEvent::EscrowFunded,
        LifecycleEvent::Delivered,
        LifecycleEvent::Released,
        LifecycleEvent::Dispute,
        LifecycleEvent::Cancel,
    ];
}

/// The lifecycle graph.
pub fn lifecycle_next(state: CommitmentState, event: LifecycleEvent) -> Option<CommitmentState> {
    use CommitmentState as S;
    use LifecycleEvent as E;
    Some(match (state, event) {
        (S::Draft, E::Propose) => S::Proposed,
        (S::Proposed, E::BuyerSign) => S::BuyerSigned,
        (S::BuyerSigned, E::SellerSign) => S::FullySigned,
        (S::FullySigned, E::EscrowFunded) => S::Escrowed,
        (S::Escrowed, E::Delivered) => S::Delivered,
        (S::Delivered, E::Released) => S::Completed,
        (S::Escrowed | S::Delivered, E::Dispute) => S::Disputed,
        (S::Draft | S::Proposed | S::BuyerSigned | S::FullySigned, E::Cancel) => S::Cancelled,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Buyer,
    Seller,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentMetadata {
    pub escrow_tx: Option<String>,
    pub delivery_hash: Option<String>,
    pub release_tx: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentRecord {
    pub value: CommitmentValue,
    pub domain: CommitmentDomain,
    pub state: CommitmentState,
    #[serde(with = "hex::serde")]
    pub commitment_hash: [u8; 32],
    pub buyer_signature: Option<Signature>,
    pub seller_signature: Option<Signature>,
    pub agreement_hash: Option<String>,
    pub metadata: CommitmentMetadata,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommitmentError {
    #[error("invalid address in {field}: {reason}")]
    InvalidAddress { field: &'static str, reason: String },
    #[error("invalid uint256 in {field}: {value:?}")]
    InvalidUint { field: &'static str, value: String },
    #[error("nonce must be nonzero")]
    ZeroNonce,
    #[error("{role:?} cannot sign in state {state:?}")]
    WrongState { role: Role, state: CommitmentState },
    #[error("{role:?} signature recovers to {recovered}, expected {expected}")]
    SignerMismatch {
        role: Role,
        recovered: String,
        expected: String,
    },
    #[error("invalid lifecycle transition: {event:?} in state {state:?}")]
    InvalidLifecycleTransition {
        state: CommitmentState,
        event: LifecycleEvent,
    },
    #[error("event {0:?} requires a signature; use sign_as")]
    SignatureRequired(LifecycleEvent),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

fn parse_address(field: &'static str, s: &str) -> Result<[u8; 20], CommitmentError> {
    Address::parse_evm(s).map_err(|e| CommitmentError::InvalidAddress {
        field,
        reason: e.to_string(),
    })
}

fn parse_uint256(field: &'static str, s: &str) -> Result<[u8; 32], CommitmentError> {
    let err = || CommitmentError::InvalidUint {
        field,
        value: s.to_string(),
    };
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0'))
    {
        return Err(err());
    }
    let n: BigUint = s.parse().map_err(|_| err())?;
    let bytes = n.to_bytes_be();
    if bytes.len() > 32 {
        return Err(err());
    }
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    Ok(out)
}

/// Random nonzero uint256 rendered in decimal.
pub fn random_nonce(rng: &dyn RandomSource) -> String {
    loop {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        let n = BigUint::from_bytes_be(&b);
        if n != BigUint::from(0u8) {
            return n.to_str_radix(10);
        }
    }
}

/// Checks field formats and returns the value with EIP-55 checksummed addresses.
fn normalize(value: &CommitmentValue) -> Result<CommitmentValue, CommitmentError> {
    let mut v = value.clone();
    for (field, slot) in [
        ("buyerAgent", &mut v.buyer_agent),
        ("sellerAgent", &mut v.seller_agent),
        ("currency", &mut v.currency),
        ("arbitrator", &mut v.arbitrator),
    ] {
        *slot = Address::evm_from_bytes(&parse_address(field, slot)?).into_string();
    }
    parse_uint256("price", &v.price)?;
    parse_uint256("deliveryDeadline", &v.delivery_deadline)?;
    if parse_uint256("nonce", &v.nonce)? == [0u8; 32] {
        return Err(CommitmentError::ZeroNonce);
    }
    Ok(v)
}

/// `sha256(canonical_json({"domain": D, "value": V}))`.
pub fn commitment_hash(domain: &CommitmentDomain, value: &CommitmentValue) -> [u8; 32] {
    #[derive(Serialize)]
    struct Envelope<'a> {
        domain: &'a CommitmentDomain,
        value: &'a CommitmentValue,
    }
    sha256(&canonical_json(&Envelope { domain, value }).expect("commitment serializes"))
}

pub fn build(
    chain_id: u64,
    value: &CommitmentValue,
    agreement_hash: Option<[u8; 32]>,
) -> Result<CommitmentRecord, CommitmentError> {
    let value = normalize(value)?;
    let domain = CommitmentDomain::new(chain_id);
    Ok(CommitmentRecord {
        commitment_hash: commitment_hash(&domain, &value),
        value,
        domain,
        state: CommitmentState::Draft,
        buyer_signature: None,
        seller_signature: None,
        agreement_hash: agreement_hash.map(hex::encode),
        metadata: CommitmentMetadata::default(),
    })
}

fn word_address(a: [u8; 20]) -> [u8; 32] {
    let mut w = [0u8; 32];
    w[12..].copy_from_slice(&a);
    w
}

fn word_u64(n: u64) -> [u8; 32] {
    let mut w = [0u8; 32];
    w[24..].copy_from_slice(&n.to_be_bytes());
    w
}

pub fn domain_separator(domain: &CommitmentDomain) -> [u8; 32] {
    let mut enc = Vec::with_capacity(32 * 4);
    enc.extend_from_slice(&keccak256(DOMAIN_TYPE.as_bytes()));
    enc.extend_from_slice(&keccak256(domain.name.as_bytes()));
    enc.extend_from_slice(&keccak256(domain.version.as_bytes()));
    enc.extend_from_slice(&word_u64(domain.chain_id));
    keccak256(&enc)
}

pub fn struct_hash(value: &CommitmentValue) -> Result<[u8; 32], CommitmentError> {
    let mut enc = Vec::with_capacity(32 * 10);
    enc.extend_from_slice(&keccak256(COMMITMENT_TYPE.as_bytes()));
    enc.extend_from_slice(&word_address(parse_address("buyerAgent", &value.buyer_agent)?));
    enc.extend_from_slice(&word_address(parse_address("sellerAgent", &value.seller_agent)?));
    enc.extend_from_slice(&keccak256(value.item.as_bytes()));
    enc.extend_from_slice(&parse_uint256("price", &value.price)?);
    enc.extend_from_slice(&word_address(parse_address("currency", &value.currency)?));
    enc.extend_from_slice(&parse_uint256("deliveryDeadline", &value.delivery_deadline)?);
    enc.extend_from_slice(&word_address(parse_address("arbitrator", &value.arbitrator)?));
    let mut flag = [0u8; 32];
    flag[31] = u8::from(value.escrow_required);
    enc.extend_from_slice(&flag);
    enc.extend_from_slice(&parse_uint256("nonce", &value.nonce)?);
    Ok(keccak256(&enc))
}

/// `keccak256(0x19 0x01 ‖ domainSeparator ‖ structHash)`.
pub fn eip712_digest(record: &CommitmentRecord) -> [u8; 32] {
    let mut enc = Vec::with_capacity(66);
    enc.extend_from_slice(&[0x19, 0x01]);
    enc.extend_from_slice(&domain_separator(&record.domain));
    enc.extend_from_slice(&struct_hash(&record.value).expect("record values are validated on build"));
    keccak256(&enc)
}

impl CommitmentRecord {
    pub fn id(&self) -> String {
        hex::encode(self.commitment_hash)
    }

    fn declared(&self, role: Role) -> &str {
        match role {
            Role::Buyer => &self.value.buyer_agent,
            Role::Seller => &self.value.seller_agent,
        }
    }

    pub fn signature(&self, role: Role) -> Option<&Signature> {
        match role {
            Role::Buyer => self.buyer_signature.as_ref(),
            Role::Seller => self.seller_signature.as_ref(),
        }
    }

    /// Checks that `sig` recovers to the declared party of `role`.
    pub fn check_signature(&self, role: Role, sig: &Signature) -> Result<(), CommitmentError> {
        let recovered = recover_evm_address(&eip712_digest(self), sig)?;
        let expected = self.declared(role);
        if !recovered.as_str().eq_ignore_ascii_case(expected) {
            return Err(CommitmentError::SignerMismatch {
                role,
                recovered: recovered.into_string(),
                expected: expected.to_string(),
            });
        }
        Ok(())
    }

    /// Verifies every stored signature and that the state matches them.
    pub fn verify(&self) -> Result<(), CommitmentError> {
        for role in [Role::Buyer, Role::Seller] {
            if let Some(sig) = self.signature(role) {
                self.check_signature(role, sig)?;
            }
        }
        let needs_both = !matches!(
            self.state,
            CommitmentState::Draft
                | CommitmentState::Proposed
                | CommitmentState::BuyerSigned
                | CommitmentState::Cancelled
        );
        if needs_both && (self.buyer_signature.is_none() || self.seller_signature.is_none()) {
            return Err(CommitmentError::WrongState {
                role: if self.buyer_signature.is_none() { Role::Buyer } else { Role::Seller },
                state: self.state,
            });
        }
        Ok(())
    }

    pub fn propose(&self) -> Result<CommitmentRecord, CommitmentError> {
        self.step(LifecycleEvent::Propose)
    }

    fn step(&self, event: LifecycleEvent) -> Result<CommitmentRecord, CommitmentError> {
        let state = lifecycle_next(self.state, event).ok_or(
            CommitmentError::InvalidLifecycleTransition {
                state: self.state,
                event,
            },
        )?;
        Ok(CommitmentRecord {
            state,
            ..self.clone()
        })
    }

    /// Derives the role's secp256k1 key under `ctx`, signs the typed-data
    /// digest and advances the lifecycle.
    pub fn sign_as(
        &self,
        role: Role,
        root: &IdentityRoot,
        ctx: &str,
    ) -> Result<CommitmentRecord, CommitmentError> {
        self.require_signing_state(role)?;
        let sig = sign_typed_data_with_context(root, ctx, &eip712_digest(self))?;
        self.attach_signature(role, sig)
    }

    /// Attaches a signature produced elsewhere, after recovery check.
    pub fn attach_signature(
        &self,
        role: Role,
        sig: Signature,
    ) -> Result<CommitmentRecord, CommitmentError> {
        self.require_signing_state(role)?;
        self.check_signature(role, &sig)?;
        let (event, mut next) = match role {
            Role::Buyer => (LifecycleEvent::BuyerSign, self.clone()),
            Role::Seller => (LifecycleEvent::SellerSign, self.clone()),
        };
        match role {
            Role::Buyer => next.buyer_signature = Some(sig),
            Role::Seller => next.seller_signature = Some(sig),
        }
        next.step(event)
    }

    fn require_signing_state(&self, role: Role) -> Result<(), CommitmentError> {
        let ok = match role {
            Role::Buyer => self.state == CommitmentState::Proposed && self.buyer_signature.is_none(),
            Role::Seller => {
                self.state == CommitmentState::BuyerSigned && self.seller_signature.is_none()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CommitmentError::WrongState {
                role,
                state: self.state,
            })
        }
    }

    /// Post-signing lifecycle events. `reference` is stored as the escrow
    /// transaction, delivery hash or release transaction respectively.
    pub fn advance(
        &self,
        event: LifecycleEvent,
        reference: Option<&str>,
    ) -> Result<CommitmentRecord, CommitmentError> {
        if matches!(event, LifecycleEvent::BuyerSign | LifecycleEvent::SellerSign) {
            return Err(CommitmentError::SignatureRequired(event));
        }
        let mut next = self.step(event)?;
        let reference = reference.map(str::to_string);
        match event {
            LifecycleEvent::EscrowFunded => next.metadata.escrow_tx = reference,
            LifecycleEvent::Delivered => next.metadata.delivery_hash = reference,
            LifecycleEvent::Released => next.metadata.release_tx = reference,
            _ => {}
        }
        Ok(next)
    }

    /// Canonical JSON hand-off form.
    pub fn export(&self) -> String {
        crate::crypto::canonical_string(self).expect("record serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{
        address_for, derive_contextual_keypair, derive_identity_root, ChainNamespace, Curve,
        MasterCredential, SeededRandom,
    };

    fn root(b: u8) -> IdentityRoot {
        derive_identity_root(&MasterCredential::new(&[b; 32], "unit").unwrap()).unwrap()
    }

    fn addr(root: &IdentityRoot, ctx: &str) -> String {
        address_for(
            &derive_contextual_keypair(root, Curve::Secp256k1, ctx).unwrap(),
            ChainNamespace::Evm,
        )
        .unwrap()
        .into_string()
    }

    fn value(buyer: String, seller: String) -> CommitmentValue {
        CommitmentValue {
            buyer_agent: buyer,
            seller_agent: seller,
            item: "weekly groceries".into(),
            price: "42500000".into(),
            currency: "0x833589fcd6edb6e08f4c7c32d4f71b54bda02913".into(),
            delivery_deadline: "1767225600".into(),
            arbitrator: "0x6813eb9362372eef6200f3b1dbc3f819671cba69".into(),
            escrow_required: true,
            nonce: "1".into(),
        }
    }

    fn setup() -> (IdentityRoot, IdentityRoot, CommitmentRecord) {
        let (rb, rs) = (root(1), root(2));
        let v = value(addr(&rb, "commit:c1:buyer:"), addr(&rs, "commit:c1:seller:"));
        (rb, rs, build(8453, &v, None).unwrap())
    }

    #[test]
    fn lifecycle_table_size() {
        let n = CommitmentState::ALL
            .iter()
            .flat_map(|&s| LifecycleEvent::ALL.iter().map(move |&e| (s, e)))
            .filter(|&(s, e)| lifecycle_next(s, e).is_some())
            .count();
        assert_eq!(n, 12);
    }

    #[test]
    fn dual_signing_flow() {
        let (rb, rs, rec) = setup();
        let rec = rec.propose().unwrap();
        assert_eq!(
            rec.sign_as(Role::Seller, &rs, "commit:c1:seller:").unwrap_err(),
            CommitmentError::WrongState {
                role: Role::Seller,
                state: CommitmentState::Proposed
            }
        );
        let rec = rec.sign_as(Role::Buyer, &rb, "commit:c1:buyer:").unwrap();
        assert_eq!(rec.state, CommitmentState::BuyerSigned);
        let rec = rec.sign_as(Role::Seller, &rs, "commit:c1:seller:").unwrap();
        assert_eq!(rec.state, CommitmentState::FullySigned);
        rec.verify().unwrap();

        let rec = rec.advance(LifecycleEvent::EscrowFunded, Some("0xescrow")).unwrap();
        assert_eq!(
            rec.advance(LifecycleEvent::Cancel, None).unwrap_err(),
            CommitmentError::InvalidLifecycleTransition {
                state: CommitmentState::Escrowed,
                event: LifecycleEvent::Cancel
            }
        );
        let rec = rec.advance(LifecycleEvent::Delivered, Some("0xproof")).unwrap();
        let disputed = rec.advance(LifecycleEvent::Dispute, None).unwrap();
        assert_eq!(disputed.state, CommitmentState::Disputed);
        let done = rec.advance(LifecycleEvent::Released, Some("0xrelease")).unwrap();
        assert_eq!(done.state, CommitmentState::Completed);
        assert_eq!(done.metadata.escrow_tx.as_deref(), Some("0xescrow"));
        assert_eq!(done.metadata.delivery_hash.as_deref(), Some("0xproof"));
        assert_eq!(done.metadata.release_tx.as_deref(), Some("0xrelease"));
    }

    #[test]
    fn wrong_key_is_signer_mismatch() {
        let (_, rs, rec) = setup();
        let rec = rec.propose().unwrap();
        assert!(matches!(
            rec.sign_as(Role::Buyer, &rs, "commit:c1:seller:"),
            Err(CommitmentError::SignerMismatch { role: Role::Buyer, .. })
        ));
    }

    #[test]
    fn signatures_cannot_bypass_via_advance() {
        let (_, _, rec) = setup();
        let rec = rec.propose().unwrap();
        assert_eq!(
            rec.advance(LifecycleEvent::BuyerSign, None).unwrap_err(),
            CommitmentError::SignatureRequired(LifecycleEvent::BuyerSign)
        );
    }

    #[test]
    fn tampered_signature_fails_verify() {
        let (rb, rs, rec) = setup();
        let rec = rec
            .propose()
            .unwrap()
            .sign_as(Role::Buyer, &rb, "commit:c1:buyer:")
            .unwrap()
            .sign_as(Role::Seller, &rs, "commit:c1:seller:")
            .unwrap();
        let mut forged = rec.clone();
        forged.seller_signature = forged.buyer_signature.clone();
        assert!(forged.verify().is_err());
        let mut unsigned = rec;
        unsigned.seller_signature = None;
        assert!(unsigned.verify().is_err());
    }

    #[test]
    fn nonce_and_chain_change_hashes() {
        let (_, _, rec) = setup();
        let mut v = rec.value.clone();
        v.nonce = "2".into();
        let other = build(8453, &v, None).unwrap();
        assert_ne!(other.commitment_hash, rec.commitment_hash);
        let other_chain = build(1, &rec.value, None).unwrap();
        assert_ne!(eip712_digest(&other_chain), eip712_digest(&rec));
        v.nonce = "1".into();
        v.item.push('!');
        assert_ne!(eip712_digest(&build(8453, &v, None).unwrap()), eip712_digest(&rec));
    }

    #[test]
    fn address_case_does_not_change_hash() {
        let (_, _, rec) = setup();
        let mut v = rec.value.clone();
        v.buyer_agent = v.buyer_agent.to_lowercase();
        assert_eq!(build(8453, &v, None).unwrap().commitment_hash, rec.commitment_hash);
    }

    #[test]
    fn validation_errors() {
        let (_, _, rec) = setup();
        let mut v = rec.value.clone();
        v.currency = "0x1234".into();
        assert!(matches!(build(1, &v, None), Err(CommitmentError::InvalidAddress { field: "currency", .. })));
        let mut v = rec.value.clone();
        v.nonce = "0".into();
        assert_eq!(build(1, &v, None).unwrap_err(), CommitmentError::ZeroNonce);
        let mut v = rec.value.clone();
        v.price = "-1".into();
        assert!(matches!(build(1, &v, None), Err(CommitmentError::InvalidUint { .. })));
        let mut v = rec.value.clone();
        // 2^256 overflows.
        v.price = "115792089237316195423570985008687907853269984665640564039457584007913129639936".into();
        assert!(build(1, &v, None).is_err());
    }

    #[test]
    fn random_nonce_is_nonzero_decimal() {
        let rng = SeededRandom::new(4);
        let n = random_nonce(&rng);
        assert!(parse_uint256("nonce", &n).is_ok());
        assert_ne!(n, random_nonce(&rng));
    }

    #[test]
    fn export_round_trip() {
        let (_, _, rec) = setup();
        let json = rec.export();
        assert!(json.contains("\"buyerAgent\""));
        let back: CommitmentRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
    }
}
