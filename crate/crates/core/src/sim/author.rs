use std::collections::{BTreeMap, BTreeSet};

use crate::identity::{Author, AuthorSecret, Digest};
use crate::message::Message;
use crate::sim::replica::Replica;
use crate::sim::scenario::{AuthorBehavior, AuthorSpec};
use crate::store::MessageStore;

/// One planned message: branch `branch`, position `index` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Step {
    pub branch: usize,
    pub index: u32,
}

#[derive(Debug)]
pub struct AuthorActor {
    pub name: String,
    pub author: Author,
    secret: AuthorSecret,
    home: Vec<usize>,
    correct: bool,
    /// Branch -> index it splits after (0 for the trunk).
    splits: Vec<u32>,
    plan: Vec<Step>,
    next: usize,
    /// Everything the author has signed plus the history its deps need.
    store: MessageStore,
    signed: BTreeMap<(usize, u32), Digest>,
    /// Every branch point (message with several children) it revealed.
    pub branch_points: BTreeSet<Digest>,
}

impl AuthorActor {
    pub fn new(spec: &AuthorSpec, label: &str) -> Self {
        let secret = AuthorSecret::derive(format!("sim/{label}/{}", spec.name).as_bytes());
        let mut splits = vec![0];
        let mut plan: Vec<Step> = Vec::new();
        match &spec.behavior {
            AuthorBehavior::Correct => {
                plan.extend((1..=spec.messages).map(|index| Step { branch: 0, index }));
            }
            AuthorBehavior::Forking { fork_plan } => {
                for (k, &(at, count)) in fork_plan.iter().enumerate() {
                    let first = splits.len();
                    splits.extend(std::iter::repeat_n(at, count - 1));
                    let mut wave: Vec<Step> = Vec::new();
                    for index in 1..=spec.messages {
                        if k == 0 {
                            wave.push(Step { branch: 0, index });
                        }
                        for branch in first..splits.len() {
                            if index > at {
                                wave.push(Step { branch, index });
                            }
                        }
                    }
                    plan.extend(wave);
                }
            }
        }
        AuthorActor {
            name: spec.name.clone(),
            author: secret.author(),
            secret,
            home: spec.home.clone(),
            correct: matches!(spec.behavior, AuthorBehavior::Correct),
            splits,
            plan,
            next: 0,
            store: MessageStore::new(),
            signed: BTreeMap::new(),
            branch_points: BTreeSet::new(),
        }
    }

    pub fn is_forking(&self) -> bool {
        !self.correct
    }

    pub fn pending(&self) -> bool {
        self.next < self.plan.len()
    }

    pub fn branches(&self) -> usize {
        self.splits.len()
    }

    fn targets(&self, branch: usize) -> Vec<usize> {
        if self.correct {
            self.home.clone()
        } else {
            vec![self.home[branch % self.home.len()]]
        }
    }

    fn prev_of(&self, step: Step) -> Option<Digest> {
        let at = self.splits[step.branch];
        match step.index {
            1 => None,
            i if i - 1 == at => Some(self.signed[&(0, at)]),
            i => Some(self.signed[&(step.branch, i - 1)]),
        }
    }

    /// Publishes the next planned message. Returns the replicas it went to.
    pub fn publish_next(&mut self, replicas: &mut [Replica]) -> Option<Vec<usize>> {
        let step = *self.plan.get(self.next)?;
        self.next += 1;
        Some(self.publish(step, replicas))
    }

    /// Extends every branch tip by one message.
    pub fn extend_all(&mut self, replicas: &mut [Replica]) {
        for branch in 0..self.branches() {
            let top = self
                .signed
                .keys()
                .filter(|(b, _)| *b == branch)
                .map(|(_, i)| *i)
                .max()
                .unwrap_or(0);
            self.publish(
                Step {
                    branch,
                    index: top + 1,
                },
                replicas,
            );
        }
    }

    fn publish(&mut self, step: Step, replicas: &mut [Replica]) -> Vec<usize> {
        let targets = self.targets(step.branch);
        let prev = self.prev_of(step);
        let deps = self.pick_deps(&replicas[targets[0]]);
        let payload = format!("{}/{}/{}", self.name, step.branch, step.index);
        let m = Message::create(&self.secret, prev, deps, payload).expect("own key");
        let id = m.id();
        let older_sibling = self
            .signed
            .values()
            .any(|d| self.store.get(d).is_some_and(|x| x.prev == prev));
        if older_sibling {
            if let Some(p) = prev {
                self.branch_points.insert(p);
            }
        }
        assert!(self.store.insert(m).is_stored(), "author signed an invalid message");
        self.signed.insert((step.branch, step.index), id);
        for &r in &targets {
            self.deliver(&mut replicas[r], &id);
        }
        targets
    }

    /// The last message of every other author the replica holds a growing
    /// log for. Authors already proven to fork are left out.
    fn pick_deps(&mut self, replica: &Replica) -> BTreeSet<Digest> {
        let deps: BTreeSet<Digest> = replica
            .frontier
            .logs()
            .filter(|l| l.author != self.author && l.is_growing())
            .filter_map(|l| l.last)
            .collect();
        copy_history(&replica.store, &mut self.store, &deps);
        deps
    }

    /// Hands `id` and whatever of its history the replica lacks to the
    /// replica, then appends it there.
    fn deliver(&self, replica: &mut Replica, id: &Digest) {
        copy_history(&self.store, &mut replica.store, &BTreeSet::from([*id]));
        replica.append(id);
    }
}

/// Inserts the causal history of `roots` from `from` into `to`.
fn copy_history(from: &MessageStore, to: &mut MessageStore, roots: &BTreeSet<Digest>) {
    let mut wanted = BTreeSet::new();
    for r in roots {
        if !to.contains(r) {
            wanted.extend(from.causal_history(Some(r)).expect("root is stored"));
        }
    }
    for (id, m) in from.iter() {
        if wanted.contains(id) && !to.contains(id) {
            assert!(to.insert(m.clone()).is_stored(), "history copy rejected");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::ReplicaBehavior;

    fn spec(behavior: AuthorBehavior, home: Vec<usize>, messages: u32) -> AuthorSpec {
        AuthorSpec {
            name: "m".into(),
            behavior,
            home,
            messages,
        }
    }

    #[test]
    fn forking_plan_layout() {
        let s = spec(
            AuthorBehavior::Forking {
                fork_plan: vec![(3, 2), (1, 2)],
            },
            vec![0, 1, 2],
            5,
        );
        let a = AuthorActor::new(&s, "t");
        let steps: Vec<(usize, u32)> = a.plan.iter().map(|s| (s.branch, s.index)).collect();
        assert_eq!(
            steps,
            vec![
                (0, 1), (0, 2), (0, 3), (0, 4), (1, 4), (0, 5), (1, 5),
                (2, 2), (2, 3), (2, 4), (2, 5),
            ]
        );
        assert_eq!(a.branches(), 3);
    }

    #[test]
    fn branches_reach_disjoint_homes() {
        let s = spec(
            AuthorBehavior::Forking {
                fork_plan: vec![(2, 2)],
            },
            vec![0, 1],
            3,
        );
        let mut a = AuthorActor::new(&s, "t");
        let mut replicas: Vec<Replica> = (0..2)
            .map(|i| Replica::new(i, ReplicaBehavior::Correct))
            .collect();
        while a.publish_next(&mut replicas).is_some() {}
        assert_eq!(replicas[0].store.len(), 3);
        // Branch 1 carries its prefix along.
        assert_eq!(replicas[1].store.len(), 3);
        for r in &replicas {
            let log = r.frontier.get(&a.author).unwrap();
            assert!(log.is_growing());
            assert_eq!(r.store.height(log.last.as_ref()).unwrap(), 3);
        }
        assert_eq!(a.branch_points.len(), 1);
    }
}
