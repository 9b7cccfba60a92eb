//! Exhaustive and seeded enumeration of stores and CRDT states.

use std::collections::{BTreeSet, HashMap};

use crate::frontier::Frontier;
use crate::identity::{Author, AuthorSecret, Digest};
use crate::log::Log;
use crate::message::Message;
use crate::store::MessageStore;

/// Parent choices for the next node after `cur`.
///
/// Node `i`'s parent is `None` (a root) or an earlier node, and the parent
/// sequence is non-decreasing with roots first. Breadth-first numbering
/// gives every forest such a sequence, so all shapes are covered (some
/// more than once).
fn next_parents(cur: &[Option<usize>]) -> Vec<Option<usize>> {
    let floor = cur.last().copied().flatten();
    let mut out = Vec::new();
    // None sorts before every index.
    if cur.last().is_none_or(|p| p.is_none()) {
        out.push(None);
    }
    out.extend((floor.unwrap_or(0)..cur.len()).map(Some));
    out
}

/// Parent arrays of every forest with `n` nodes that start with `prefix`.
pub fn forest_shapes_from(prefix: &[Option<usize>], n: usize) -> Vec<Vec<Option<usize>>> {
    fn go(n: usize, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if cur.len() >= n {
            out.push(cur.clone());
            return;
        }
        for p in next_parents(cur) {
            cur.push(p);
            go(n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, &mut prefix.to_vec(), &mut out);
    out
}

/// Parent arrays of every forest with `n` nodes, up to isomorphism.
pub fn forest_shapes(n: usize) -> Vec<Vec<Option<usize>>> {
    forest_shapes_from(&[], n)
}

/// Visits every `n`-node forest extending `prefix` with its messages and a
/// store holding them. Stores are built along the recursion, so shapes that
/// share a prefix share its insertions.
pub fn visit_forests(
    secret: &AuthorSecret,
    prefix: &[Option<usize>],
    n: usize,
    cache: &mut MessageCache,
    visit: &mut dyn FnMut(&[Option<usize>], &[Message], &MessageStore),
) {
    fn go(
        secret: &AuthorSecret,
        n: usize,
        shape: &mut Vec<Option<usize>>,
        msgs: &mut Vec<Message>,
        store: &MessageStore,
        cache: &mut MessageCache,
        visit: &mut dyn FnMut(&[Option<usize>], &[Message], &MessageStore),
    ) {
        if shape.len() >= n {
            visit(shape, msgs, store);
            return;
        }
        for p in next_parents(shape) {
            let m = node_message(secret, shape.len(), p.map(|p| msgs[p].id()), cache);
            let mut next = store.clone();
            assert!(next.insert(m.clone()).is_stored(), "enumerated message rejected");
            shape.push(p);
            msgs.push(m);
            go(secret, n, shape, msgs, &next, cache, visit);
            shape.pop();
            msgs.pop();
        }
    }
    let msgs = forest_messages(secret, prefix, cache);
    let store = store_of(msgs.iter().cloned());
    go(secret, n, &mut prefix.to_vec(), &mut msgs.clone(), &store, cache, visit);
}

fn node_message(
    secret: &AuthorSecret,
    i: usize,
    prev: Option<Digest>,
    cache: &mut MessageCache,
) -> Message {
    cache.message(secret, prev, BTreeSet::new(), format!("n{i}").into_bytes())
}

/// Memoizes signed messages by `(prev, payload)` so shared shape prefixes
/// are only signed once.
#[derive(Default)]
pub struct MessageCache {
    signed: HashMap<(Author, Option<Digest>, BTreeSet<Digest>, Vec<u8>), Message>,
}

impl MessageCache {
    pub fn message(
        &mut self,
        secret: &AuthorSecret,
        prev: Option<Digest>,
        deps: BTreeSet<Digest>,
        payload: Vec<u8>,
    ) -> Message {
        let key = (secret.author(), prev, deps, payload);
        self.signed
            .entry(key)
            .or_insert_with_key(|(_, prev, deps, payload)| {
                Message::create(secret, *prev, deps.clone(), payload.clone())
                    .expect("own secret")
            })
            .clone()
    }
}

/// Signs one message per node of `shape`, in node order.
pub fn forest_messages(
    secret: &AuthorSecret,
    shape: &[Option<usize>],
    cache: &mut MessageCache,
) -> Vec<Message> {
    let mut ids: Vec<Digest> = Vec::with_capacity(shape.len());
    let mut out = Vec::with_capacity(shape.len());
    for (i, parent) in shape.iter().enumerate() {
        let m = node_message(secret, i, parent.map(|p| ids[p]), cache);
        ids.push(m.id());
        out.push(m);
    }
    out
}

pub fn store_of(msgs: impl IntoIterator<Item = Message>) -> MessageStore {
    let mut store = MessageStore::new();
    for m in msgs {
        assert!(store.insert(m).is_stored(), "enumerated message rejected");
    }
    store
}

/// Every valid log state of `author` over `store`.
pub fn log_states(store: &MessageStore, author: &Author) -> Vec<Log> {
    let own: Vec<Digest> = store.by_author(author).copied().collect();
    let mut out = vec![Log::new(*author)];
    out.extend(own.iter().map(|d| Log::growing(*author, Some(*d))));
    let points = std::iter::once(None).chain(own.iter().copied().map(Some));
    for p in points {
        let children: Vec<Digest> = own
            .iter()
            .filter(|d| store.get(d).is_some_and(|m| m.prev == p))
            .copied()
            .collect();
        assert!(children.len() < 16, "too many siblings to enumerate");
        for mask in 0u32..(1 << children.len()) {
            if mask.count_ones() < 2 {
                continue;
            }
            let forks = children
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, d)| *d)
                .collect();
            out.push(Log::shrinking(*author, p, forks));
        }
    }
    out
}

/// Every valid frontier over the given authors: each author is absent or
/// holds one of its valid log states.
pub fn frontier_universe(store: &MessageStore, authors: &[Author]) -> Vec<Frontier> {
    let mut out = vec![Frontier::new()];
    for a in authors {
        let states = log_states(store, a);
        let mut next = Vec::with_capacity(out.len() * (states.len() + 1));
        for f in &out {
            next.push(f.clone());
            for s in &states {
                let mut g = f.clone();
                g.replace(s.clone());
                next.push(g);
            }
        }
        out = next;
    }
    out
}
