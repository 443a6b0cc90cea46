//! Encrypted, transport-agnostic message exchange driving session replicas.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use uuid::Uuid;

use super::{MessageKind, NegotiationError, NegotiationSession, SessionState};
use crate::crypto::{
    agree_and_encrypt, canonical_json, decrypt, rng::uuid_from, DerivedKeypair, EncryptedEnvelope,
    EnvelopeMeta, RandomSource,
};
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    NegotiationOffer,
    NegotiationCounter,
    NegotiationAccept,
    NegotiationReject,
}

/// Plaintext body carried inside an [`EncryptedEnvelope`] as canonical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationMessage {
    #[serde(rename = "type")]
    pub message_type: MessageType,
    pub session_id: Uuid,
    pub payload: Value,
    pub sender_agent: AgentId,
    pub message_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Pluggable delivery of envelopes between agents.
pub trait MessageSender: Send + Sync {
    fn send(
        &self,
        from: &AgentId,
        to: &AgentId,
        envelope: &EncryptedEnvelope,
    ) -> Result<(), TransportError>;
}

/// Per-recipient FIFO mailboxes.
#[derive(Debug, Default)]
pub struct InMemoryTransport {
    mailboxes: Mutex<HashMap<AgentId, VecDeque<(AgentId, EncryptedEnvelope)>>>,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Removes and returns everything queued for `to`, oldest first.
    pub fn drain(&self, to: &AgentId) -> Vec<(AgentId, EncryptedEnvelope)> {
        self.mailboxes
            .lock()
            .get_mut(to)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn pending(&self, to: &AgentId) -> usize {
        self.mailboxes.lock().get(to).map_or(0, VecDeque::len)
    }
}

impl MessageSender for InMemoryTransport {
    fn send(
        &self,
        from: &AgentId,
        to: &AgentId,
        envelope: &EncryptedEnvelope,
    ) -> Result<(), TransportError> {
        self.mailboxes
            .lock()
            .entry(to.clone())
            .or_default()
            .push_back((from.clone(), envelope.clone()));
        Ok(())
    }
}

/// One agent's side of any number of negotiations.
pub struct NegotiationParty {
    agent: AgentId,
    keypair: DerivedKeypair,
    peers: HashMap<AgentId, Vec<u8>>,
    sessions: HashMap<Uuid, NegotiationSession>,
    seen: HashSet<(Uuid, String)>,
    transport: Arc<dyn MessageSender>,
    rng: Arc<dyn RandomSource>,
}

impl std::fmt::Debug for NegotiationParty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NegotiationParty")
            .field("agent", &self.agent)
            .field("sessions", &self.sessions.len())
            .finish_non_exhaustive()
    }
}

impl NegotiationParty {
    /// `keypair` must be an x25519 key.
    pub fn new(
        agent: AgentId,
        keypair: DerivedKeypair,
        transport: Arc<dyn MessageSender>,
        rng: Arc<dyn RandomSource>,
    ) -> Self {
        Self {
            agent,
            keypair,
            peers: HashMap::new(),
            sessions: HashMap::new(),
            seen: HashSet::new(),
            transport,
            rng,
        }
    }

    pub fn agent(&self) -> &AgentId {
        &self.agent
    }

    pub fn public_key(&self) -> &[u8] {
        self.keypair.public_key()
    }

    pub fn register_peer(&mut self, agent: AgentId, x25519_public: &[u8]) {
        self.peers.insert(agent, x25519_public.to_vec());
    }

    pub fn session(&self, id: &Uuid) -> Option<&NegotiationSession> {
        self.sessions.get(id)
    }

    pub fn session_mut(&mut self, id: &Uuid) -> Option<&mut NegotiationSession> {
        self.sessions.get_mut(id)
    }

    fn peer_key(&self, peer: &AgentId) -> Result<&[u8], NegotiationError> {
        self.peers
            .get(peer)
            .map(Vec::as_slice)
            .ok_or_else(|| NegotiationError::UnknownPeer(peer.clone()))
    }

    fn counterparty(&self, s: &NegotiationSession) -> AgentId {
        if s.initiator_agent == self.agent {
            s.responder_agent.clone()
        } else {
            s.initiator_agent.clone()
        }
    }

    /// Opens a session with `responder` by sending an offer.
    pub fn open(
        &mut self,
        responder: &AgentId,
        payload: Value,
        now: i64,
    ) -> Result<Uuid, NegotiationError> {
        self.peer_key(responder)?;
        let id = uuid_from(self.rng.as_ref());
        let mut session = NegotiationSession::new(id, self.agent.clone(), responder.clone(), now);
        session.apply(MessageKind::Offer, payload.clone(), &self.agent, now)?;
        self.send_message(&session, MessageType::NegotiationOffer, payload, now)?;
        self.sessions.insert(id, session);
        Ok(id)
    }

    pub fn counter(&mut self, id: Uuid, payload: Value, now: i64) -> Result<(), NegotiationError> {
        self.local(id, MessageKind::Counter, MessageType::NegotiationCounter, payload, now)
    }

    /// Accepts the last offer; the accept message carries the agreement hash.
    pub fn accept(&mut self, id: Uuid, now: i64) -> Result<[u8; 32], NegotiationError> {
        let hash = self
            .sessions
            .get(&id)
            .ok_or(NegotiationError::UnknownSession(id))?
            .compute_agreement_hash()?;
        let payload = json!({ "agreement_hash": hex::encode(hash) });
        self.local(id, MessageKind::Accept, MessageType::NegotiationAccept, payload, now)?;
        Ok(hash)
    }

    pub fn reject(&mut self, id: Uuid, reason: Option<&str>, now: i64) -> Result<(), NegotiationError> {
        let payload = json!({ "reason": reason });
        self.local(id, MessageKind::Reject, MessageType::NegotiationReject, payload, now)
    }

    /// Local-only transition once a commitment has been attached.
    pub fn commit(&mut self, id: Uuid, commitment_ref: &str, now: i64) -> Result<(), NegotiationError> {
        let agent = self.agent.clone();
        self.sessions
            .get_mut(&id)
            .ok_or(NegotiationError::UnknownSession(id))?
            .apply(MessageKind::Commit, json!({ "commitment": commitment_ref }), &agent, now)
            .map(|_| ())
    }

    pub fn dispute(&mut self, id: Uuid, now: i64) -> Result<(), NegotiationError> {
        let agent = self.agent.clone();
        self.sessions
            .get_mut(&id)
            .ok_or(NegotiationError::UnknownSession(id))?
            .apply(MessageKind::Dispute, Value::Null, &agent, now)
            .map(|_| ())
    }

    fn local(
        &mut self,
        id: Uuid,
        kind: MessageKind,
        message_type: MessageType,
        payload: Value,
        now: i64,
    ) -> Result<(), NegotiationError> {
        let mut session = self
            .sessions
            .get(&id)
            .cloned()
            .ok_or(NegotiationError::UnknownSession(id))?;
        session.apply(kind, payload.clone(), &self.agent, now)?;
        self.send_message(&session, message_type, payload, now)?;
        self.sessions.insert(id, session);
        Ok(())
    }

    fn send_message(
        &self,
        session: &NegotiationSession,
        message_type: MessageType,
        payload: Value,
        now: i64,
    ) -> Result<(), NegotiationError> {
        let to = self.counterparty(session);
        let message = NegotiationMessage {
            message_type,
            session_id: session.id,
            payload,
            sender_agent: self.agent.clone(),
            message_id: uuid_from(self.rng.as_ref()).to_string(),
            timestamp: now,
        };
        let body = canonical_json(&message).map_err(|e| NegotiationError::Malformed(e.to_string()))?;
        let envelope = agree_and_encrypt(
            &self.keypair,
            self.peer_key(&to)?,
            &body,
            EnvelopeMeta {
                message_id: message.message_id.clone(),
                timestamp: now,
            },
            self.rng.as_ref(),
        )
        .map_err(NegotiationError::Decrypt)?;
        self.transport.send(&self.agent, &to, &envelope)?;
        Ok(())
    }

    /// Decrypts, rejects replays, then drives the local replica. An offer
    /// for an unknown session creates the responder replica.
    pub fn receive(
        &mut self,
        from: &AgentId,
        envelope: &EncryptedEnvelope,
        now: i64,
    ) -> Result<NegotiationMessage, NegotiationError> {
        let body = decrypt(&self.keypair, self.peer_key(from)?, envelope)
            .map_err(NegotiationError::Decrypt)?;
        let message: NegotiationMessage = serde_json::from_slice(&body)
            .map_err(|e| NegotiationError::Malformed(e.to_string()))?;
        if &message.sender_agent != from || message.message_id != envelope.message_id {
            return Err(NegotiationError::Malformed(
                "envelope and body disagree on sender or message id".into(),
            ));
        }
        let replay_key = (message.session_id, message.message_id.clone());
        if !self.seen.insert(replay_key) {
            return Err(NegotiationError::ReplayDetected(message.message_id));
        }

        let id = message.session_id;
        let mut session = match (self.sessions.get(&id), message.message_type) {
            (Some(s), _) => s.clone(),
            (None, MessageType::NegotiationOffer) => NegotiationSession::new(
                id,
                from.clone(),
                self.agent.clone(),
                message.timestamp,
            ),
            (None, _) => return Err(NegotiationError::UnknownSession(id)),
        };
        let kind = match message.message_type {
            MessageType::NegotiationOffer => MessageKind::OfferRecv,
            MessageType::NegotiationCounter => MessageKind::Counter,
            MessageType::NegotiationAccept => MessageKind::Accept,
            MessageType::NegotiationReject => MessageKind::Reject,
        };
        if session.state != SessionState::Initial && kind == MessageKind::OfferRecv {
            return Err(NegotiationError::InvalidTransition {
                state: session.state,
                kind,
            });
        }
        session.apply(kind, message.payload.clone(), from, now)?;
        if kind == MessageKind::Accept {
            let expected = hex::encode(session.agreement_hash.expect("set on accept"));
            let received = message
                .payload
                .get("agreement_hash")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            if expected != received {
                return Err(NegotiationError::AgreementMismatch { expected, received });
            }
        }
        self.sessions.insert(id, session);
        Ok(message)
    }

    /// Drains and processes every envelope queued for this party.
    pub fn pump(
        &mut self,
        transport: &InMemoryTransport,
        now: i64,
    ) -> Vec<Result<NegotiationMessage, NegotiationError>> {
        transport
            .drain(&self.agent)
            .into_iter()
            .map(|(from, env)| self.receive(&from, &env, now))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Curve, SeededRandom};

    fn parties() -> (NegotiationParty, NegotiationParty, Arc<InMemoryTransport>) {
        let rng: Arc<dyn RandomSource> = Arc::new(SeededRandom::new(5));
        let t = Arc::new(InMemoryTransport::new());
        let ka = DerivedKeypair::generate(Curve::X25519, rng.as_ref()).unwrap();
        let kb = DerivedKeypair::generate(Curve::X25519, rng.as_ref()).unwrap();
        let mut a = NegotiationParty::new(AgentId::from("buyer"), ka, t.clone(), rng.clone());
        let mut b = NegotiationParty::new(AgentId::from("seller"), kb, t.clone(), rng);
        a.register_peer(b.agent().clone(), b.public_key());
        b.register_peer(a.agent().clone(), a.public_key());
        (a, b, t)
    }

    #[test]
    fn replicas_agree() {
        let (mut a, mut b, t) = parties();
        let id = a.open(b.agent(), json!({"price": 12}), 10).unwrap();
        let got = b.pump(&t, 11);
        assert_eq!(got[0].as_ref().unwrap().payload, json!({"price": 12}));
        assert_eq!(b.session(&id).unwrap().state, SessionState::OfferReceived);

        b.counter(id, json!({"price": 11}), 12).unwrap();
        a.pump(&t, 13).into_iter().for_each(|r| {
            r.unwrap();
        });
        let hash = a.accept(id, 14).unwrap();
        b.pump(&t, 15).into_iter().for_each(|r| {
            r.unwrap();
        });
        let (sa, sb) = (a.session(&id).unwrap(), b.session(&id).unwrap());
        assert_eq!(sa.state, SessionState::Accepted);
        assert_eq!(sb.state, SessionState::Accepted);
        assert_eq!(sa.agreement_hash, Some(hash));
        assert_eq!(sb.agreement_hash, Some(hash));
        assert_eq!(sa.round_count, sb.round_count);
    }

    #[test]
    fn replay_is_detected() {
        let (mut a, mut b, t) = parties();
        a.open(b.agent(), json!({"price": 1}), 1).unwrap();
        let (from, env) = t.drain(b.agent()).pop().unwrap();
        b.receive(&from, &env, 2).unwrap();
        assert!(matches!(
            b.receive(&from, &env, 3),
            Err(NegotiationError::ReplayDetected(_))
        ));
    }

    #[test]
    fn unknown_session_errors() {
        let (mut a, mut b, t) = parties();
        let id = a.open(b.agent(), json!(1), 1).unwrap();
        // The opening offer is lost in transit; the counter that follows
        // refers to a session the responder never saw.
        t.drain(b.agent());
        a.counter(id, json!(2), 2).unwrap();
        let got = b.pump(&t, 3);
        assert_eq!(got[0], Err(NegotiationError::UnknownSession(id)));
    }

    #[test]
    fn reject_carries_reason() {
        let (mut a, mut b, t) = parties();
        let id = a.open(b.agent(), json!(1), 1).unwrap();
        b.pump(&t, 2);
        b.reject(id, Some("too expensive"), 3).unwrap();
        let msgs = a.pump(&t, 4);
        let m = msgs[0].as_ref().unwrap();
        assert_eq!(m.payload["reason"], "too expensive");
        assert_eq!(a.session(&id).unwrap().state, SessionState::Rejected);
    }

    #[test]
    fn commit_and_dispute_are_local() {
        let (mut a, mut b, t) = parties();
        let id = a.open(b.agent(), json!(1), 1).unwrap();
        b.pump(&t, 2);
        b.accept(id, 3).unwrap();
        a.pump(&t, 4);
        a.commit(id, "0xabc", 5).unwrap();
        a.dispute(id, 6).unwrap();
        assert_eq!(a.session(&id).unwrap().state, SessionState::Disputed);
        assert_eq!(t.pending(b.agent()), 0);
    }
}
