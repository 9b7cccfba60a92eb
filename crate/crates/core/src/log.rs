//! The two-phase single-author log CRDT.
//!
//! A log grows by following its author's prev chain until a fork is found.
//! From then on it only shrinks: `last` moves back to the greatest lower
//! bound of every known fork, and `forks` holds the first message of each
//! branch as the proof. A log state only means something next to the store
//! that holds the messages it names.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::identity::{Author, Digest};
use crate::store::MessageStore;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("log of {expected:?} cannot take input from {found:?}")]
    AuthorMismatch { expected: Author, found: Author },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Growing,
    Shrinking,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Growing => "growing",
            Phase::Shrinking => "shrinking",
        })
    }
}

/// Rule used to compare a growing state with a shrinking one.
///
/// Every other pair of phases is compared the same way under all rules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OrderRule {
    /// A growing state is below a shrinking one iff their lasts lie on a
    /// single chain. Under this rule `join` is the least upper bound.
    #[default]
    ComparableLasts,
    /// A growing state is below every shrinking one. Merge is then an upper
    /// bound but not always the least one.
    AlwaysBelow,
    /// Growing is never below shrinking. Broken on purpose; used to check
    /// that the oracle suites catch a wrong order.
    #[doc(hidden)]
    Never,
}

/// Per-author log state: `(author, last, forks)`.
///
/// The phase is not stored: a log is shrinking exactly when `forks` is
/// non-empty.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Log {
    pub author: Author,
    pub last: Option<Digest>,
    pub forks: BTreeSet<Digest>,
}

/// A validity property of log states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Property {
    /// Growing: no forks.
    CL1,
    /// Growing: last is bottom or a stored message.
    CL2,
    /// Growing: last is by the log's author.
    CL3,
    /// Shrinking: forks non-empty.
    FL1,
    FL2,
    FL3,
    /// Every fork member is stored.
    FL4,
    /// Every fork member is by the log's author.
    FL5,
    /// Every fork member has a distinct sibling in the set.
    FL6,
    /// Every fork member's prev is last.
    FL7,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LogValidityReport {
    pub violated: Vec<Property>,
}

impl LogValidityReport {
    pub fn valid(&self) -> bool {
        self.violated.is_empty()
    }

    pub fn violates(&self, p: Property) -> bool {
        self.violated.contains(&p)
    }
}

impl Log {
    /// The initial growing state with last at bottom.
    pub fn new(author: Author) -> Self {
        Log {
            author,
            last: None,
            forks: BTreeSet::new(),
        }
    }

    pub fn growing(author: Author, last: Option<Digest>) -> Self {
        Log {
            author,
            last,
            forks: BTreeSet::new(),
        }
    }

    pub fn shrinking(author: Author, last: Option<Digest>, forks: BTreeSet<Digest>) -> Self {
        Log {
            author,
            last,
            forks,
        }
    }

    pub fn phase(&self) -> Phase {
        if self.forks.is_empty() {
            Phase::Growing
        } else {
            Phase::Shrinking
        }
    }

    pub fn is_growing(&self) -> bool {
        self.forks.is_empty()
    }

    fn same_author(&self, other: &Author) -> Result<(), LogError> {
        if self.author == *other {
            Ok(())
        } else {
            Err(LogError::AuthorMismatch {
                expected: self.author,
                found: *other,
            })
        }
    }

    /// Appends a stored message by the log's author.
    pub fn append(&self, store: &MessageStore, m: &Digest) -> Result<Log, LogError> {
        self.same_author(&store.author_of(m)?)?;
        let last = self.last.as_ref();
        if self.is_growing() {
            if store.log_happens_before(last, m)? {
                return Ok(Log::growing(self.author, Some(*m)));
            }
            if store.leq_log(Some(m), last)? {
                return Ok(self.clone());
            }
        } else if !store.concurrent_log(Some(m), last)? {
            return Ok(self.clone());
        }
        // Fork: m is concurrent with last.
        Ok(Log {
            author: self.author,
            last: store.log_prefix(last, Some(m))?,
            forks: store.fork_proof(last, Some(m))?,
        })
    }

    pub fn leq(&self, other: &Log, store: &MessageStore) -> Result<bool, LogError> {
        self.leq_with(other, store, OrderRule::default())
    }

    pub fn leq_with(
        &self,
        other: &Log,
        store: &MessageStore,
        rule: OrderRule,
    ) -> Result<bool, LogError> {
        self.same_author(&other.author)?;
        let (a, b) = (self.last.as_ref(), other.last.as_ref());
        Ok(match (self.phase(), other.phase()) {
            (Phase::Growing, Phase::Growing) => store.leq_log(a, b)?,
            (Phase::Growing, Phase::Shrinking) => match rule {
                OrderRule::ComparableLasts => !store.concurrent_log(a, b)?,
                OrderRule::AlwaysBelow => true,
                OrderRule::Never => false,
            },
            (Phase::Shrinking, Phase::Growing) => false,
            // Shrunk further back is larger.
            (Phase::Shrinking, Phase::Shrinking) => store.leq_log(b, a)?,
        })
    }

    /// Merge of two states of the same author's log.
    pub fn join(&self, other: &Log, store: &MessageStore) -> Result<Log, LogError> {
        self.same_author(&other.author)?;
        let (a, b) = (self.last.as_ref(), other.last.as_ref());
        if !store.concurrent_log(a, b)? {
            match (self.phase(), other.phase()) {
                (Phase::Growing, Phase::Growing) => {
                    return Ok(if store.leq_log(a, b)? {
                        other.clone()
                    } else {
                        self.clone()
                    });
                }
                (Phase::Shrinking, Phase::Growing) => return Ok(self.clone()),
                (Phase::Growing, Phase::Shrinking) => return Ok(other.clone()),
                (Phase::Shrinking, Phase::Shrinking) => {}
            }
        }
        let last = store.log_prefix(a, b)?;
        let mut forks = BTreeSet::new();
        let candidates = store
            .fork_proof(a, b)?
            .into_iter()
            .chain(self.forks.iter().copied())
            .chain(other.forks.iter().copied());
        for m in candidates {
            if store.get(&m).map(|msg| msg.prev) == Some(last) {
                forks.insert(m);
            }
        }
        Ok(Log {
            author: self.author,
            last,
            forks,
        })
    }

    /// Checks every property of the log's own phase.
    pub fn validate(&self, store: &MessageStore) -> LogValidityReport {
        self.validate_claimed(self.phase(), store)
    }

    /// Checks the properties of `claimed`, which may disagree with the fork
    /// set (a remote peer can claim any phase).
    pub fn validate_claimed(&self, claimed: Phase, store: &MessageStore) -> LogValidityReport {
        let mut violated = Vec::new();
        let last_msg = self.last.as_ref().map(|d| store.get(d));
        let last_stored = !matches!(last_msg, Some(None));
        let last_author_ok = match last_msg {
            Some(Some(m)) => m.author == self.author,
            _ => true,
        };
        match claimed {
            Phase::Growing => {
                if !self.forks.is_empty() {
                    violated.push(Property::CL1);
                }
                if !last_stored {
                    violated.push(Property::CL2);
                }
                if !last_author_ok {
                    violated.push(Property::CL3);
                }
            }
            Phase::Shrinking => {
                if self.forks.is_empty() {
                    violated.push(Property::FL1);
                }
                if !last_stored {
                    violated.push(Property::FL2);
                }
                if !last_author_ok {
                    violated.push(Property::FL3);
                }
                let members: Vec<_> = self.forks.iter().map(|d| (d, store.get(d))).collect();
                if members.iter().any(|(_, m)| m.is_none()) {
                    violated.push(Property::FL4);
                }
                let stored: Vec<_> = members
                    .iter()
                    .filter_map(|(d, m)| m.map(|m| (*d, m)))
                    .collect();
                if stored.iter().any(|(_, m)| m.author != self.author) {
                    violated.push(Property::FL5);
                }
                let has_sibling = |d: &Digest, prev: &Option<Digest>| {
                    stored.iter().any(|(e, m)| *e != d && m.prev == *prev)
                };
                // A member whose own existence cannot be checked has no provable sibling.
                if members.iter().any(|(d, m)| match m {
                    Some(m) => !has_sibling(d, &m.prev),
                    None => true,
                }) {
                    violated.push(Property::FL6);
                }
                if stored.iter().any(|(_, m)| m.prev != self.last) {
                    violated.push(Property::FL7);
                }
            }
        }
        LogValidityReport { violated }
    }

    /// Two states are equivalent when each is `<=` the other: identical
    /// growing states, or shrinking states with the same last whatever
    /// their fork sets.
    pub fn equivalent(&self, other: &Log) -> bool {
        self.author == other.author
            && self.phase() == other.phase()
            && self.last == other.last
    }

    /// Keeps only the two smallest fork members, which already form a proof.
    pub fn normalized(&self) -> Log {
        Log {
            author: self.author,
            last: self.last,
            forks: self.forks.iter().take(2).copied().collect(),
        }
    }

    /// Adds every stored message of the author whose prev is `last`.
    ///
    /// Each such message is a valid proof member, so the state stays
    /// equivalent. Replicas that apply this after every merge end up with
    /// identical fork sets once their stores agree.
    pub fn with_stored_siblings(&self, store: &MessageStore) -> Log {
        if self.is_growing() {
            return self.clone();
        }
        let mut out = self.clone();
        for d in store.by_author(&self.author) {
            if store.get(d).is_some_and(|m| m.prev == self.last) {
                out.forks.insert(*d);
            }
        }
        out
    }
}

fn fmt_pos(f: &mut fmt::Formatter<'_>, d: &Option<Digest>) -> fmt::Result {
    match d {
        Some(d) => write!(f, "{d}"),
        None => f.write_str("-"),
    }
}

impl fmt::Display for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{} last=", self.author, self.phase())?;
        fmt_pos(f, &self.last)?;
        if !self.is_growing() {
            f.write_str(" forks={")?;
            for (i, d) in self.forks.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{d}")?;
            }
            f.write_str("}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Log({:?}, {}, last={:?}", self.author, self.phase(), self.last)?;
        if !self.is_growing() {
            write!(f, ", forks={:?}", self.forks)?;
        }
        f.write_str(")")
    }
}
