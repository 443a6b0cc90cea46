use std::collections::HashMap;
use std::sync::Arc;

use aesp_core::constants::REVIEW_DEADLINE_MS;
use aesp_core::crypto::SeededRandom;
use aesp_core::identity::AgentId;
use aesp_core::policy::ActionRequest;
use aesp_core::review::{
    ReviewError, ReviewEventType, ReviewHandle, ReviewQueue, ReviewResponse, ReviewStatus,
    ReviewVerdict, Tier, Urgency,
};
use aesp_core::storage::{FileStorage, InMemoryStorage, StorageAdapter};
use proptest::prelude::*;
use uuid::Uuid;

const T0: i64 = 1_772_445_600_000;
const AGENTS: [&str; 3] = ["agent-a", "agent-b", "agent-c"];

fn action(agent: &str, amount: u64) -> ActionRequest {
    ActionRequest {
        id: Uuid::from_u128(u128::from(amount)),
        agent_id: AgentId::from(agent),
        amount,
        to: "0xabc".into(),
        chain: "base".into(),
        method: "transfer".into(),
        timestamp: T0,
        current_balance: 1_000_000_000,
    }
}

fn response(id: Uuid, verdict: ReviewVerdict, bio: bool, modified: Option<ActionRequest>) -> ReviewResponse {
    ReviewResponse {
        request_id: id,
        verdict,
        modified_action: modified,
        biometric_confirmed: bio,
        responder: "owner".into(),
        timestamp: T0,
    }
}

fn queue_with(storage: Arc<dyn StorageAdapter>) -> ReviewQueue {
    ReviewQueue::with_rng(storage, Arc::new(SeededRandom::new(1))).unwrap()
}

#[test]
fn tier_enforcement_exhaustive() {
    for tier in [Tier::Review, Tier::Biometric] {
        for verdict in ReviewVerdict::ALL {
            for bio in [false, true] {
                let q = queue_with(Arc::new(InMemoryStorage::new()));
                let h = q.submit(action("agent-a", 5), vec![], Urgency::Normal, tier, T0).unwrap();
                let id = h.request_id;
                let modified = (verdict == ReviewVerdict::Modify).then(|| action("agent-a", 1));
                let got = q.respond(id, response(id, verdict, bio, modified), T0 + 1);
                let must_refuse = tier == Tier::Biometric && verdict != ReviewVerdict::Reject && !bio;
                if must_refuse {
                    assert_eq!(got.unwrap_err(), ReviewError::TierViolation, "{tier:?} {verdict:?}");
                    assert_eq!(q.get(id).unwrap().status, ReviewStatus::Pending);
                } else {
                    let r = got.unwrap();
                    assert!(r.status.is_terminal());
                }
                let approved_without_bio = q.list(None).iter().any(|r| {
                    r.required_tier == Tier::Biometric
                        && r.status == ReviewStatus::Approved
                        && !r.response.as_ref().unwrap().biometric_confirmed
                });
                assert!(!approved_without_bio);
            }
        }
    }
}

#[test]
fn freeze_survives_restart_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let agent = AgentId::from("agent-a");
    {
        let q = queue_with(Arc::new(FileStorage::open(dir.path()).unwrap()));
        let mut hs: Vec<ReviewHandle> = (0..3)
            .map(|i| q.submit(action("agent-a", i), vec![], Urgency::High, Tier::Review, T0).unwrap())
            .collect();
        q.submit(action("agent-b", 9), vec![], Urgency::High, Tier::Review, T0).unwrap();
        let mut sub = q.subscribe();
        assert_eq!(q.freeze(&agent, T0 + 1).unwrap(), 3);
        let events = sub.drain();
        assert_eq!(events.len(), 3);
        assert!(events.iter().all(|e| e.kind == ReviewEventType::RequestCancelled));
        assert!(q.pending().iter().all(|r| r.agent_id != agent));
        for h in &mut hs {
            assert_eq!(h.try_result().unwrap(), Err(ReviewError::AgentFrozen(agent.clone())));
        }
    }
    let q = queue_with(Arc::new(FileStorage::open(dir.path()).unwrap()));
    assert!(q.is_frozen(&agent));
    assert_eq!(
        q.submit(action("agent-a", 1), vec![], Urgency::Low, Tier::Review, T0 + 2).unwrap_err(),
        ReviewError::AgentFrozen(agent.clone())
    );
    let statuses: Vec<_> = q.list(None).iter().map(|r| (r.agent_id.clone(), r.status)).collect();
    assert_eq!(statuses.len(), 4);
    assert_eq!(statuses.iter().filter(|(_, s)| *s == ReviewStatus::Cancelled).count(), 3);
    q.unfreeze(&agent).unwrap();
    q.submit(action("agent-a", 1), vec![], Urgency::Low, Tier::Review, T0 + 3).unwrap();
}

#[derive(Debug, Clone)]
enum Op {
    Submit { agent: usize, urgency: usize, biometric: bool },
    Respond { pick: usize, verdict: usize, bio: bool },
    Advance(i64),
    Sweep,
    Freeze(usize),
    Unfreeze(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..3usize, 0..4usize, any::<bool>()).prop_map(|(agent, urgency, biometric)| Op::Submit { agent, urgency, biometric }),
        4 => (any::<usize>(), 0..3usize, any::<bool>()).prop_map(|(pick, verdict, bio)| Op::Respond { pick, verdict, bio }),
        2 => (0..REVIEW_DEADLINE_MS / 2).prop_map(Op::Advance),
        1 => Just(Op::Sweep),
        1 => (0..3usize).prop_map(Op::Freeze),
        1 => (0..3usize).prop_map(Op::Unfreeze),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exactly_once_and_event_completeness(ops in prop::collection::vec(op(), 1..60)) {
        let q = queue_with(Arc::new(InMemoryStorage::new()));
        let mut sub = q.subscribe();
        let mut handles: Vec<ReviewHandle> = Vec::new();
        let mut outcomes: HashMap<Uuid, usize> = HashMap::new();
        let mut now = T0;
        for o in ops {
            match o {
                Op::Submit { agent, urgency, biometric } => {
                    let tier = if biometric { Tier::Biometric } else { Tier::Review };
                    match q.submit(action(AGENTS[agent], 1), vec![], Urgency::ALL[urgency], tier, now) {
                        Ok(h) => handles.push(h),
                        Err(e) => prop_assert!(q.is_frozen(&AgentId::from(AGENTS[agent])), "{e}"),
                    }
                }
                Op::Respond { pick, verdict, bio } => {
                    if !handles.is_empty() {
                        let id = handles[pick % handles.len()].request_id;
                        let v = ReviewVerdict::ALL[verdict];
                        let agent = q.get(id).unwrap().agent_id;
                        let modified = (v == ReviewVerdict::Modify).then(|| action(agent.as_str(), 2));
                        let _ = q.respond(id, response(id, v, bio, modified), now);
                    }
                }
                Op::Advance(ms) => now += ms,
                Op::Sweep => {
                    q.expire_sweep(now);
                }
                Op::Freeze(a) => {
                    let agent = AgentId::from(AGENTS[a]);
                    q.freeze(&agent, now).unwrap();
                    prop_assert!(q.pending().iter().all(|r| r.agent_id != agent));
                }
                Op::Unfreeze(a) => q.unfreeze(&AgentId::from(AGENTS[a])).unwrap(),
            }
            for h in &mut handles {
                if let Some(r) = h.try_result() {
                    *outcomes.entry(h.request_id).or_default() += 1;
                    // A resolved handle must agree with the stored status.
                    let status = q.get(h.request_id).unwrap().status;
                    match r {
                        Ok(resp) => prop_assert_eq!(
                            status,
                            match resp.verdict {
                                ReviewVerdict::Approve => ReviewStatus::Approved,
                                ReviewVerdict::Reject => ReviewStatus::Rejected,
                                ReviewVerdict::Modify => ReviewStatus::Modified,
                            }
                        ),
                        Err(ReviewError::Expired) => prop_assert_eq!(status, ReviewStatus::Expired),
                        Err(ReviewError::AgentFrozen(_)) => prop_assert_eq!(status, ReviewStatus::Cancelled),
                        Err(e) => prop_assert!(false, "unexpected {e}"),
                    }
                }
            }
            // Poll only unresolved handles next round.
            handles.retain(|h| !outcomes.contains_key(&h.request_id));
        }
        // Drain everything: all remaining requests expire.
        q.expire_sweep(now + REVIEW_DEADLINE_MS + 1);
        for h in &mut handles {
            prop_assert!(h.try_result().is_some());
            *outcomes.entry(h.request_id).or_default() += 1;
        }
        prop_assert!(outcomes.values().all(|&n| n == 1));
        let all = q.list(None);
        prop_assert!(all.iter().all(|r| r.status.is_terminal()));
        prop_assert_eq!(outcomes.len(), all.len());

        let events = sub.drain();
        prop_assert_eq!(events.len() as u64, q.events_emitted());
        prop_assert_eq!(events.len(), 2 * all.len());
        for r in &all {
            let mine: Vec<_> = events.iter().filter(|e| e.request_id == r.id).map(|e| e.kind).collect();
            prop_assert_eq!(mine.len(), 2);
            prop_assert_eq!(mine[0], ReviewEventType::RequestCreated);
            let terminal = match r.status {
                ReviewStatus::Approved => ReviewEventType::RequestApproved,
                ReviewStatus::Rejected => ReviewEventType::RequestRejected,
                ReviewStatus::Modified => ReviewEventType::RequestModified,
                ReviewStatus::Expired => ReviewEventType::RequestExpired,
                ReviewStatus::Cancelled => ReviewEventType::RequestCancelled,
                ReviewStatus::Pending => unreachable!(),
            };
            prop_assert_eq!(mine[1], terminal);
        }
    }

    #[test]
    fn dequeue_order_is_urgency_then_fifo(subs in prop::collection::vec((0..4usize, 0..5i64), 1..40)) {
        let q = queue_with(Arc::new(InMemoryStorage::new()));
        let mut expected = Vec::new();
        for (i, &(u, dt)) in subs.iter().enumerate() {
            let h = q.submit(action("agent-a", i as u64), vec![], Urgency::ALL[u], Tier::Review, T0 + dt).unwrap();
            expected.push((std::cmp::Reverse(Urgency::ALL[u]), T0 + dt, i, h.request_id));
        }
        expected.sort();
        let got: Vec<_> = q.pending().into_iter().map(|r| r.id).collect();
        let want: Vec<_> = expected.into_iter().map(|e| e.3).collect();
        prop_assert_eq!(got, want);
    }
}
