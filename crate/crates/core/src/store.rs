//! Validated, append-only, content-addressed message store.
//!
//! Messages are only accepted once everything they reference is already
//! stored, so insertion order is a topological order and no cycle can ever
//! be accepted. Each entry memoizes its ancestor set and its height on the
//! author's chain; the relation queries in [`crate::graph`] read those.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::identity::{Author, Digest};
use crate::message::{DecodeError, Message};

/// Why a message was not accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    /// `prev` or a dep is not stored yet. Not misbehavior: fetch and re-offer.
    MissingDependency(Digest),
    /// Previous message is by another author.
    M2,
    /// A dependency is by the message's own author.
    M3,
    /// Two dependencies share an author.
    M4,
    /// Signature does not verify.
    M5,
    /// A same-author dependency went backwards along the author's log (strict mode).
    M7,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::MissingDependency(_) => "MissingDependency",
            RejectReason::M2 => "M2",
            RejectReason::M3 => "M3",
            RejectReason::M4 => "M4",
            RejectReason::M5 => "M5",
            RejectReason::M7 => "M7",
        }
    }

    /// A correctly signed message that is structurally invalid can only
    /// have been produced by its author.
    pub fn is_misbehavior(&self) -> bool {
        matches!(
            self,
            RejectReason::M2 | RejectReason::M3 | RejectReason::M4 | RejectReason::M7
        )
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::MissingDependency(d) => write!(f, "MissingDependency({d})"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Accepted(Digest),
    AlreadyPresent(Digest),
    Rejected(RejectReason),
}

impl InsertOutcome {
    pub fn is_stored(&self) -> bool {
        matches!(
            self,
            InsertOutcome::Accepted(_) | InsertOutcome::AlreadyPresent(_)
        )
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Entry {
    pub id: Digest,
    pub msg: Arc<Message>,
    /// 1 for a root, one more than `prev` otherwise.
    pub height: u32,
    /// Insertion indices of every message strictly happening before this one.
    pub ancestors: FixedBitSet,
}

#[derive(Clone, Debug, Default)]
pub struct MessageStore {
    pub(crate) entries: Vec<Entry>,
    pub(crate) index: FxHashMap<Digest, usize>,
    by_author: BTreeMap<Author, BTreeSet<Digest>>,
    strict: bool,
}

impl MessageStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that additionally enforces monotonic dependencies (M7).
    pub fn strict() -> Self {
        MessageStore {
            strict: true,
            ..Self::default()
        }
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &Digest) -> Option<&Message> {
        self.index.get(id).map(|&i| &*self.entries[i].msg)
    }

    /// Messages in insertion (topological) order.
    pub fn iter(&self) -> impl Iterator<Item = (&Digest, &Message)> + '_ {
        self.entries.iter().map(|e| (&e.id, &*e.msg))
    }

    pub fn by_author(&self, author: &Author) -> impl Iterator<Item = &Digest> + '_ {
        self.by_author.get(author).into_iter().flatten()
    }

    pub fn authors(&self) -> impl Iterator<Item = &Author> + '_ {
        self.by_author.keys()
    }

    /// Validates and stores `m`.
    ///
    /// Checks run in a fixed order: signature (M5), then `prev` (M1/M2),
    /// then deps (M3/M4), then M7 in strict mode. An unauthenticated
    /// message is rejected before its references are looked at.
    pub fn insert(&mut self, m: Message) -> InsertOutcome {
        let id = m.id();
        if self.contains(&id) {
            return InsertOutcome::AlreadyPresent(id);
        }
        if let Err(reason) = self.validate(&m) {
            return InsertOutcome::Rejected(reason);
        }

        let mut ancestors = FixedBitSet::with_capacity(self.entries.len() + 1);
        let mut height = 1;
        let parents = m.prev.iter().chain(m.deps.iter());
        for p in parents {
            let pi = self.index[p];
            ancestors.union_with(&self.entries[pi].ancestors);
            ancestors.insert(pi);
        }
        if let Some(p) = &m.prev {
            height = self.entries[self.index[p]].height + 1;
        }

        let idx = self.entries.len();
        self.by_author.entry(m.author).or_default().insert(id);
        self.index.insert(id, idx);
        self.entries.push(Entry {
            id,
            msg: Arc::new(m),
            height,
            ancestors,
        });
        InsertOutcome::Accepted(id)
    }

    fn validate(&self, m: &Message) -> Result<(), RejectReason> {
        if !m.verify() {
            return Err(RejectReason::M5);
        }
        if let Some(prev) = &m.prev {
            let p = self
                .get(prev)
                .ok_or(RejectReason::MissingDependency(*prev))?;
            if p.author != m.author {
                return Err(RejectReason::M2);
            }
        }
        let mut dep_authors = BTreeSet::new();
        for d in &m.deps {
            let dm = self.get(d).ok_or(RejectReason::MissingDependency(*d))?;
            if dm.author == m.author {
                return Err(RejectReason::M3);
            }
            if !dep_authors.insert(dm.author) {
                return Err(RejectReason::M4);
            }
        }
        if self.strict && !self.monotonic_deps(m) {
            return Err(RejectReason::M7);
        }
        Ok(())
    }

    /// Every same-author dependency of an earlier message on `m`'s chain must
    /// be `<=` the corresponding dependency of `m`.
    fn monotonic_deps(&self, m: &Message) -> bool {
        let mine: BTreeMap<Author, usize> = m
            .deps
            .iter()
            .map(|d| {
                let i = self.index[d];
                (self.entries[i].msg.author, i)
            })
            .collect();
        let mut cursor = m.prev;
        while let Some(p) = cursor {
            let e = &self.entries[self.index[&p]];
            for d in &e.msg.deps {
                let di = self.index[d];
                let dauthor = self.entries[di].msg.author;
                if let Some(&ni) = mine.get(&dauthor) {
                    if di != ni && !self.entries[ni].ancestors.contains(di) {
                        return false;
                    }
                }
            }
            cursor = e.msg.prev;
        }
        true
    }

    /// Length-prefixed records in insertion order.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        encode_records(self.entries.iter().map(|e| &*e.msg))
    }

    /// Rebuilds a store by replaying every record through [`MessageStore::insert`].
    pub fn replay(bytes: &[u8], strict: bool) -> Result<MessageStore, ReplayError> {
        let mut store = if strict {
            MessageStore::strict()
        } else {
            MessageStore::new()
        };
        for (record, m) in decode_records(bytes)?.into_iter().enumerate() {
            if let InsertOutcome::Rejected(reason) = store.insert(m) {
                return Err(ReplayError::Rejected { record, reason });
            }
        }
        Ok(store)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("record {record}: {source}")]
    Decode { record: usize, source: DecodeError },
    #[error("record {record} rejected: {reason}")]
    Rejected { record: usize, reason: RejectReason },
}

pub fn encode_records<'a>(msgs: impl IntoIterator<Item = &'a Message>) -> Vec<u8> {
    let mut out = Vec::new();
    for m in msgs {
        let bytes = m.to_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn decode_records(mut bytes: &[u8]) -> Result<Vec<Message>, ReplayError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let record = out.len();
        let err = |source| ReplayError::Decode { record, source };
        if bytes.len() < 4 {
            return Err(err(DecodeError::Truncated));
        }
        let n = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        bytes = &bytes[4..];
        if bytes.len() < n {
            return Err(err(DecodeError::Truncated));
        }
        out.push(Message::from_bytes(&bytes[..n]).map_err(err)?);
        bytes = &bytes[n..];
    }
    Ok(out)
}
