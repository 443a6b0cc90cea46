//! Agent identities, owner-signed certificates and the delegation hierarchy.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::MAX_HIERARCHY_DEPTH;
use crate::crypto::{
    self, canonical_json, derive_contextual_keypair, sha256, CryptoError, Curve, DerivedKeypair,
    IdentityRoot, Signature,
};
use crate::policy::Policy;

/// 64-char lowercase hex agent identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    /// The human principal at the top of every hierarchy.
    pub fn root() -> Self {
        AgentId("0".repeat(64))
    }

    pub fn is_root(&self) -> bool {
        self.0.len() == 64 && self.0.bytes().all(|b| b == b'0')
    }

    pub fn from_public_key(pk: &[u8]) -> Self {
        AgentId(hex::encode(sha256(pk)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct AgentIdentity {
    pub index: u32,
    pub agent_id: AgentId,
    pub did: String,
    keypair: DerivedKeypair,
}

impl AgentIdentity {
    pub fn public_key(&self) -> &[u8] {
        self.keypair.public_key()
    }

    pub fn keypair(&self) -> &DerivedKeypair {
        &self.keypair
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        crypto::sign(&self.keypair, message).expect("agent keys are ed25519")
    }
}

/// Derivation context of agent `index`.
pub fn agent_context(index: u32) -> String {
    format!("agent-identity:{index}:")
}

pub fn derive_agent(root: &IdentityRoot, index: u32) -> AgentIdentity {
    let keypair = derive_contextual_keypair(root, Curve::Ed25519, &agent_context(index))
        .expect("agent context is non-empty");
    let agent_id = AgentId::from_public_key(keypair.public_key());
    AgentIdentity {
        index,
        did: format!("did:aesp:{agent_id}"),
        agent_id,
        keypair,
    }
}

/// The principal's own signing key, used as `owner_xid` in certificates.
pub fn derive_owner_key(root: &IdentityRoot) -> DerivedKeypair {
    derive_contextual_keypair(root, Curve::Ed25519, "owner:xid:").expect("non-empty context")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Payment,
    Negotiation,
    DataQuery,
    Commitment,
    Delegation,
    Arbitration,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::Payment,
        Capability::Negotiation,
        Capability::DataQuery,
        Capability::Commitment,
        Capability::Delegation,
        Capability::Arbitration,
    ];

    pub fn all() -> BTreeSet<Capability> {
        Self::ALL.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityCertificate {
    pub version: String,
    pub agent_id: AgentId,
    #[serde(with = "hex::serde")]
    pub agent_public_key: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub owner_xid: Vec<u8>,
    pub capabilities: BTreeSet<Capability>,
    #[serde(with = "hex::serde")]
    pub policy_hash: Vec<u8>,
    pub max_autonomous_amount: u64,
    pub chains: Vec<String>,
    pub created_at: i64,
    pub expires_at: i64,
    pub owner_signature: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVerdict {
    Valid,
    Expired,
    SignatureInvalid,
    UntrustedOwner,
}

impl IdentityCertificate {
    /// Canonical bytes covered by the owner signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_value(self).expect("certificate serializes");
        v.as_object_mut()
            .expect("certificate is an object")
            .remove("owner_signature");
        crypto::canonical_json_value(&v)
    }

    pub fn to_json(&self) -> String {
        crypto::canonical_string(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct CertificateParams {
    pub capabilities: BTreeSet<Capability>,
    pub max_autonomous_amount: u64,
    pub chains: Vec<String>,
    pub created_at: i64,
    pub validity_ms: i64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("certificate validity must be positive")]
    InvalidValidity,
    #[error("hierarchy depth would exceed {MAX_HIERARCHY_DEPTH}")]
    DepthExceeded,
    #[error("child requests capabilities its parent lacks: {0:?}")]
    CapabilityEscalation(Vec<Capability>),
    #[error("unknown parent {0}")]
    UnknownParent(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {0} is already in the hierarchy")]
    AlreadyPresent(AgentId),
    #[error("agent {0} still has children")]
    HasChildren(AgentId),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

pub fn issue_certificate(
    owner: &DerivedKeypair,
    agent: &AgentIdentity,
    policy: &Policy,
    params: CertificateParams,
) -> Result<IdentityCertificate, IdentityError> {
    if params.validity_ms <= 0 {
        return Err(IdentityError::InvalidValidity);
    }
    let mut cert = IdentityCertificate {
        version: "1.0".to_string(),
        agent_id: agent.agent_id.clone(),
        agent_public_key: agent.public_key().to_vec(),
        owner_xid: owner.public_key().to_vec(),
        capabilities: params.capabilities,
        policy_hash: sha256(&canonical_json(policy)?).to_vec(),
        max_autonomous_amount: params.max_autonomous_amount,
        chains: params.chains,
        created_at: params.created_at,
        expires_at: params.created_at + params.validity_ms,
        owner_signature: Signature::from_bytes(Vec::new()),
    };
    cert.owner_signature = crypto::sign(owner, &cert.signing_bytes())?;
    Ok(cert)
}

/// Checks, in order: trusted owner, signature, `now < expires_at`.
pub fn verify_certificate(
    cert: &IdentityCertificate,
    trusted_owner_xid: &[u8],
    now: i64,
) -> CertificateVerdict {
    if cert.owner_xid != trusted_owner_xid {
        return CertificateVerdict::UntrustedOwner;
    }
    if !crypto::verify(
        Curve::Ed25519,
        &cert.owner_xid,
        &cert.signing_bytes(),
        &cert.owner_signature,
    ) {
        return CertificateVerdict::SignatureInvalid;
    }
    if now >= cert.expires_at {
        return CertificateVerdict::Expired;
    }
    CertificateVerdict::Valid
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub agent_id: AgentId,
    pub parent_id: AgentId,
    pub depth: usize,
    pub capabilities: BTreeSet<Capability>,
}

/// Delegation forest below the human principal. Mutations are serialized by
/// the write lock; reads run concurrently.
#[derive(Debug, Default)]
pub struct Hierarchy {
    nodes: RwLock<HashMap<AgentId, HierarchyNode>>,
}

impl Hierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_child(
        &self,
        parent_id: &AgentId,
        child: &AgentId,
        capabilities: BTreeSet<Capability>,
    ) -> Result<HierarchyNode, IdentityError> {
        let mut nodes = self.nodes.write();
        if child.is_root() || nodes.contains_key(child) {
            return Err(IdentityError::AlreadyPresent(child.clone()));
        }
        let (parent_depth, parent_caps) = if parent_id.is_root() {
            (0, Capability::all())
        } else {
            let p = nodes
                .get(parent_id)
                .ok_or_else(|| IdentityError::UnknownParent(parent_id.clone()))?;
            (p.depth, p.capabilities.clone())
        };
        if parent_depth + 1 > MAX_HIERARCHY_DEPTH {
            return Err(IdentityError::DepthExceeded);
        }
        let extra: Vec<Capability> = capabilities.difference(&parent_caps).copied().collect();
        if !extra.is_empty() {
            return Err(IdentityError::CapabilityEscalation(extra));
        }
        let node = HierarchyNode {
            agent_id: child.clone(),
            parent_id: parent_id.clone(),
            depth: parent_depth + 1,
            capabilities,
        };
        nodes.insert(child.clone(), node.clone());
        Ok(node)
    }

    /// Removes a leaf node.
    pub fn remove(&self, agent_id: &AgentId) -> Result<HierarchyNode, IdentityError> {
        let mut nodes = self.nodes.write();
        if nodes.values().any(|n| &n.parent_id == agent_id) {
            return Err(IdentityError::HasChildren(agent_id.clone()));
        }
        nodes
            .remove(agent_id)
            .ok_or_else(|| IdentityError::UnknownAgent(agent_id.clone()))
    }

    pub fn get(&self, agent_id: &AgentId) -> Option<HierarchyNode> {
        self.nodes.read().get(agent_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.nodes.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> Vec<HierarchyNode> {
        let mut v: Vec<_> = self.nodes.read().values().cloned().collect();
        v.sort_by(|a, b| (a.depth, &a.agent_id).cmp(&(b.depth, &b.agent_id)));
        v
    }

    /// `[agent, parent, ..., ROOT]`.
    pub fn escalation_chain(&self, agent_id: &AgentId) -> Result<Vec<AgentId>, IdentityError> {
        let nodes = self.nodes.read();
        let mut chain = vec![agent_id.clone()];
        let mut cur = nodes
            .get(agent_id)
            .ok_or_else(|| IdentityError::UnknownAgent(agent_id.clone()))?;
        loop {
            chain.push(cur.parent_id.clone());
            if cur.parent_id.is_root() {
                return Ok(chain);
            }
            cur = &nodes[&cur.parent_id];
        }
    }
}
