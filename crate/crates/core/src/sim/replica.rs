use std::collections::{BTreeMap, BTreeSet};

use crate::frontier::Frontier;
use crate::identity::{Author, Digest};
use crate::log::Log;
use crate::message::Message;
use crate::rng::SimRng;
use crate::sim::scenario::ReplicaBehavior;
use crate::store::{InsertOutcome, MessageStore, RejectReason};

/// Kept proof that an author signed an invalid message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Misbehavior {
    pub message: Message,
    pub reason: RejectReason,
}

#[derive(Clone, Debug)]
pub struct Replica {
    pub id: usize,
    pub behavior: ReplicaBehavior,
    pub store: MessageStore,
    pub frontier: Frontier,
    /// At most one record per author.
    pub misbehavior: BTreeMap<Author, Misbehavior>,
    /// Rejected messages and logs by reason label.
    pub rejections: BTreeMap<String, u64>,
}

impl Replica {
    pub fn new(id: usize, behavior: ReplicaBehavior) -> Self {
        Replica {
            id,
            behavior,
            store: MessageStore::new(),
            frontier: Frontier::new(),
            misbehavior: BTreeMap::new(),
            rejections: BTreeMap::new(),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.behavior.is_correct()
    }

    /// Inserts `m`, keeping the first correctly signed invalid message of
    /// each author as a misbehavior record.
    pub fn offer(&mut self, m: Message) -> InsertOutcome {
        let out = self.store.insert(m.clone());
        if let InsertOutcome::Rejected(reason) = &out {
            *self.rejections.entry(reason.label().to_string()).or_default() += 1;
            if reason.is_misbehavior() {
                self.misbehavior
                    .entry(m.author)
                    .or_insert(Misbehavior {
                        message: m,
                        reason: *reason,
                    });
            }
        }
        out
    }

    /// Merges a remote log if it is valid against the local store.
    pub fn receive_log(&mut self, log: &Log) -> bool {
        if !log.validate(&self.store).valid() {
            *self.rejections.entry("InvalidLog".into()).or_default() += 1;
            return false;
        }
        self.frontier
            .merge_log(&self.store, log)
            .expect("validated log of a stored author");
        self.refresh(&log.author);
        true
    }

    /// Appends a stored message of its author to the local frontier.
    pub fn append(&mut self, id: &Digest) {
        let author = self.store.author_of(id).expect("appended message is stored");
        let current = self
            .frontier
            .get(&author)
            .cloned()
            .unwrap_or_else(|| Log::new(author));
        let next = current
            .append(&self.store, id)
            .expect("own author, stored message");
        self.frontier.replace(next);
        self.refresh(&author);
    }

    /// Pulls every stored sibling into a shrinking log's proof.
    fn refresh(&mut self, author: &Author) {
        if let Some(log) = self.frontier.get(author) {
            let enriched = log.with_stored_siblings(&self.store);
            self.frontier.replace(enriched);
        }
    }

    pub fn snapshot(&self) -> String {
        self.frontier.snapshot()
    }
}

/// What `sender` offers `receiver` in one sync: messages of its frontier
/// the receiver lacks, in topological order, then its logs.
pub fn offer(
    sender: &Replica,
    receiver: &Replica,
    rng: &mut SimRng,
) -> (Vec<Message>, Vec<Log>) {
    let keep = |rng: &mut SimRng| match sender.behavior {
        ReplicaBehavior::ByzantinePartial { fraction } => rng.chance(fraction),
        _ => true,
    };
    if let ReplicaBehavior::ByzantineOmit { drop_probability } = sender.behavior {
        if rng.chance(drop_probability) {
            return (Vec::new(), Vec::new());
        }
    }
    let wanted: BTreeSet<Digest> = sender
        .frontier
        .messages(&sender.store)
        .expect("frontier names stored messages");
    let mut msgs = Vec::new();
    for (id, m) in sender.store.iter() {
        if wanted.contains(id) && !receiver.store.contains(id) && keep(rng) {
            msgs.push(m.clone());
        }
    }
    let mut logs = Vec::new();
    for log in sender.frontier.logs() {
        if keep(rng) {
            logs.push(log.clone());
        }
    }
    (msgs, logs)
}

/// One directed anti-entropy step from `sender` to `receiver`.
pub fn sync(receiver: &mut Replica, sender: &Replica, rng: &mut SimRng) {
    let (msgs, logs) = offer(sender, receiver, rng);
    for m in msgs {
        receiver.offer(m);
    }
    for log in &logs {
        receiver.receive_log(log);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Fixture;
    use crate::identity::AuthorSecret;
    use crate::log::Phase;

    fn deliver(r: &mut Replica, fx: &Fixture, ids: &[Digest]) {
        for id in ids {
            assert!(r.offer(fx.msg(*id).clone()).is_stored());
            r.append(id);
        }
    }

    #[test]
    fn disjoint_chains_merge_to_join() {
        let fx = Fixture::new();
        let mut r0 = Replica::new(0, ReplicaBehavior::Correct);
        let mut r1 = Replica::new(1, ReplicaBehavior::Correct);
        deliver(&mut r0, &fx, &[fx.a1, fx.a2]);
        deliver(&mut r1, &fx, &[fx.a1, fx.b1, fx.b2]);
        let expected = r0.frontier.join(&r1.frontier, &fx.store).unwrap();
        let mut rng = SimRng::new(1);
        sync(&mut r1, &r0, &mut rng);
        assert_eq!(r1.frontier, expected);
        assert!(r1.frontier.is_valid(&r1.store));
    }

    #[test]
    fn branches_meet_and_shrink() {
        let fx = Fixture::new();
        let mut r0 = Replica::new(0, ReplicaBehavior::Correct);
        let mut r1 = Replica::new(1, ReplicaBehavior::Correct);
        deliver(&mut r0, &fx, &[fx.a1, fx.a2, fx.a3]);
        deliver(&mut r1, &fx, &[fx.a1, fx.a2p]);
        let mut rng = SimRng::new(1);
        sync(&mut r1, &r0, &mut rng);
        sync(&mut r0, &r1, &mut rng);
        for r in [&r0, &r1] {
            let log = r.frontier.get(&fx.sa.author()).unwrap();
            assert_eq!(log.phase(), Phase::Shrinking);
            assert_eq!(log.last, Some(fx.a1));
            assert_eq!(log.forks, BTreeSet::from([fx.a2, fx.a2p]));
        }
        assert_eq!(r0.snapshot(), r1.snapshot());
    }

    #[test]
    fn omitting_sender_changes_nothing() {
        let fx = Fixture::new();
        let mut byz = Replica::new(0, ReplicaBehavior::ByzantineOmit {
            drop_probability: 1.0,
        });
        deliver(&mut byz, &fx, &[fx.a1, fx.a2]);
        let mut r = Replica::new(1, ReplicaBehavior::Correct);
        let before = r.snapshot();
        sync(&mut r, &byz, &mut SimRng::new(3));
        assert_eq!(r.snapshot(), before);
        assert!(r.store.is_empty());
    }

    #[test]
    fn one_misbehavior_record_per_author() {
        let fx = Fixture::new();
        let mut r = Replica::new(0, ReplicaBehavior::Correct);
        for id in [fx.a1, fx.a2] {
            r.offer(fx.msg(id).clone());
        }
        for i in 0..5 {
            // Two deps by author A.
            let bad = Message::create(&fx.sc, None, BTreeSet::from([fx.a1, fx.a2]), format!("bad{i}"))
                .unwrap();
            assert_eq!(r.offer(bad), InsertOutcome::Rejected(RejectReason::M4));
        }
        assert_eq!(r.misbehavior.len(), 1);
        let kept = &r.misbehavior[&fx.sc.author()];
        assert_eq!(kept.reason, RejectReason::M4);
        assert_eq!(kept.message.payload, b"bad0");

        let mut forged = Message::create(&AuthorSecret::derive(b"x"), None, BTreeSet::new(), "f").unwrap();
        forged.payload = b"g".to_vec();
        assert_eq!(r.offer(forged), InsertOutcome::Rejected(RejectReason::M5));
        assert_eq!(r.misbehavior.len(), 1, "a bad signature proves nothing about its author");
        assert_eq!(r.rejections["M4"], 5);
    }
}
