//! Inputs shared by the benchmarks.

use std::collections::BTreeSet;

use bftlog::{AuthorSecret, Digest, Log, Message, MessageStore};

/// A store holding one author's chain of `len` messages that forks into
/// two branches of `len` more after the middle message.
pub struct Forked {
    pub store: MessageStore,
    pub trunk: Vec<Digest>,
    pub left: Vec<Digest>,
    pub right: Vec<Digest>,
}

fn chain(
    secret: &AuthorSecret,
    store: &mut MessageStore,
    from: Option<Digest>,
    len: usize,
    tag: &str,
) -> Vec<Digest> {
    let mut prev = from;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let m = Message::create(secret, prev, BTreeSet::new(), format!("{tag}{i}")).unwrap();
        let id = m.id();
        assert!(store.insert(m).is_stored());
        out.push(id);
        prev = Some(id);
    }
    out
}

pub fn forked(len: usize) -> Forked {
    let secret = AuthorSecret::derive(b"bench/forker");
    let mut store = MessageStore::new();
    let trunk = chain(&secret, &mut store, None, len, "t");
    let tip = trunk.last().copied();
    let left = chain(&secret, &mut store, tip, len, "l");
    let right = chain(&secret, &mut store, tip, len, "r");
    Forked {
        store,
        trunk,
        left,
        right,
    }
}

impl Forked {
    pub fn tip_log(&self, branch: &[Digest]) -> Log {
        let author = self.store.author_of(&self.trunk[0]).unwrap();
        Log::growing(author, branch.last().copied())
    }
}
