//! Negotiation state machine.
//!
//! Eight states, thirteen legal `(state, kind)` pairs. Each party keeps its
//! own replica of a session; the initiator applies `offer` and the responder
//! `offer_recv` for the opening message, after which both replicas apply the
//! same kinds in the same order.

mod protocol;

pub use protocol::{
    InMemoryTransport, MessageSender, MessageType, NegotiationMessage, NegotiationParty,
    TransportError,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;

use crate::constants::{MAX_NEGOTIATION_ROUNDS, NEGOTIATION_TTL_MS};
use crate::crypto::{canonical_json_value, sha256, CryptoError};
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Initial,
    OfferSent,
    OfferReceived,
    Countering,
    Accepted,
    Rejected,
    Committed,
    Disputed,
}

impl SessionState {
    pub const ALL: [SessionState; 8] = [
        SessionState::Initial,
        SessionState::OfferSent,
        SessionState::OfferReceived,
        SessionState::Countering,
        SessionState::Accepted,
        SessionState::Rejected,
        SessionState::Committed,
        SessionState::Disputed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Rejected | SessionState::Disputed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Offer,
    OfferRecv,
    Counter,
    Accept,
    Reject,
    Commit,
    Dispute,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::Offer,
        MessageKind::OfferRecv,
        MessageKind::Counter,
        MessageKind::Accept,
        MessageKind::Reject,
        MessageKind::Commit,
        MessageKind::Dispute,
    ];

    /// Kinds that consume a negotiation round.
    pub fn is_round(self) -> bool {
        matches!(
            self,
            MessageKind::Offer | MessageKind::OfferRecv | MessageKind::Counter
        )
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The transition function. `None` for every pair outside the legal set.
pub fn next_state(state: SessionState, kind: MessageKind) -> Option<SessionState> {
    use MessageKind as K;
    use SessionState as S;
    Some(match (state, kind) {
        (S::Initial, K::Offer) => S::OfferSent,
        (S::Initial, K::OfferRecv) => S::OfferReceived,
        (S::OfferSent | S::OfferReceived | S::Countering, K::Counter) => S::Countering,
        (S::OfferSent | S::OfferReceived | S::Countering, K::Accept) => S::Accepted,
        (S::OfferSent | S::OfferReceived | S::Countering, K::Reject) => S::Rejected,
        (S::Accepted, K::Commit) => S::Committed,
        (S::Committed, K::Dispute) => S::Disputed,
        _ => return None,
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NegotiationError {
    #[error("invalid transition: {kind} in state {state}")]
    InvalidTransition {
        state: SessionState,
        kind: MessageKind,
    },
    #[error("session expired")]
    SessionExpired,
    #[error("round limit of {0} exceeded")]
    RoundLimitExceeded(u32),
    #[error("session has no offer or counter round")]
    NoRounds,
    #[error("replayed message {0}")]
    ReplayDetected(String),
    #[error("decryption failed: {0}")]
    Decrypt(CryptoError),
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("unknown session {0}")]
    UnknownSession(Uuid),
    #[error("no x25519 key registered for peer {0}")]
    UnknownPeer(AgentId),
    #[error("accept carries agreement hash {received}, local replica computed {expected}")]
    AgreementMismatch { expected: String, received: String },
    #[error("malformed message: {0}")]
    Malformed(String),
}

/// One recorded message of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    #[serde(rename = "type")]
    pub message_type: MessageType,
    pub payload: Value,
    pub sender: AgentId,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationSession {
    pub id: Uuid,
    pub initiator_agent: AgentId,
    pub responder_agent: AgentId,
    pub state: SessionState,
    pub rounds: Vec<Round>,
    pub round_count: u32,
    pub max_rounds: u32,
    pub created_at: i64,
    pub ttl_ms: i64,
    #[serde(with = "opt_hex32")]
    pub agreement_hash: Option<[u8; 32]>,
}

mod opt_hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(h) => s.serialize_some(&hex::encode(h)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; 32]>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| {
                let mut out = [0u8; 32];
                hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
                Ok(out)
            })
            .transpose()
    }
}

impl NegotiationSession {
    pub fn new(id: Uuid, initiator: AgentId, responder: AgentId, created_at: i64) -> Self {
        Self {
            id,
            initiator_agent: initiator,
            responder_agent: responder,
            state: SessionState::Initial,
            rounds: Vec::new(),
            round_count: 0,
            max_rounds: MAX_NEGOTIATION_ROUNDS,
            created_at,
            ttl_ms: NEGOTIATION_TTL_MS,
            agreement_hash: None,
        }
    }

    pub fn is_expired(&self, now: i64) -> bool {
        now >= self.created_at + self.ttl_ms
    }

    /// Validates and applies `kind` without recording a round. Round-kinds
    /// still consume the round budget.
    pub fn transition(&mut self, kind: MessageKind, now: i64) -> Result<SessionState, NegotiationError> {
        if self.is_expired(now) {
            return Err(NegotiationError::SessionExpired);
        }
        let next = next_state(self.state, kind).ok_or(NegotiationError::InvalidTransition {
            state: self.state,
            kind,
        })?;
        if kind.is_round() && self.round_count >= self.max_rounds {
            return Err(NegotiationError::RoundLimitExceeded(self.max_rounds));
        }
        if kind == MessageKind::Accept {
            self.agreement_hash = Some(self.compute_agreement_hash()?);
        }
        if kind.is_round() {
            self.round_count += 1;
        }
        self.state = next;
        Ok(next)
    }

    /// Applies `kind` and records the message. Offers, counters, accepts and
    /// rejects become rounds; commit and dispute are local events.
    pub fn apply(
        &mut self,
        kind: MessageKind,
        payload: Value,
        sender: &AgentId,
        now: i64,
    ) -> Result<SessionState, NegotiationError> {
        let message_type = match kind {
            MessageKind::Offer | MessageKind::OfferRecv => Some(MessageType::NegotiationOffer),
            MessageKind::Counter => Some(MessageType::NegotiationCounter),
            MessageKind::Accept => Some(MessageType::NegotiationAccept),
            MessageKind::Reject => Some(MessageType::NegotiationReject),
            MessageKind::Commit | MessageKind::Dispute => None,
        };
        let round = message_type.map(|message_type| Round {
            message_type,
            payload,
            sender: sender.clone(),
            timestamp: now,
        });
        // Offers and counters must be visible to the hash computed on accept,
        // so they are pushed before transitioning and popped on failure.
        let pushed_early = kind.is_round();
        if pushed_early {
            self.rounds.push(round.clone().expect("round kinds carry a type"));
        }
        match self.transition(kind, now) {
            Ok(s) => {
                if !pushed_early {
                    self.rounds.extend(round);
                }
                Ok(s)
            }
            Err(e) => {
                if pushed_early {
                    self.rounds.pop();
                }
                Err(e)
            }
        }
    }

    /// The most recent offer or counter round.
    pub fn last_offer(&self) -> Option<&Round> {
        self.rounds.iter().rev().find(|r| {
            matches!(
                r.message_type,
                MessageType::NegotiationOffer | MessageType::NegotiationCounter
            )
        })
    }

    /// `sha256(canonical_json(last offer/counter payload))`.
    pub fn compute_agreement_hash(&self) -> Result<[u8; 32], NegotiationError> {
        let last = self.last_offer().ok_or(NegotiationError::NoRounds)?;
        Ok(sha256(&canonical_json_value(&last.payload)))
    }
}
