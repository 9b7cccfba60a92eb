//! A small, fully deterministic hash graph used by tests, golden vectors and
//! the CLI.
//!
//! ```text
//!   A:  a1 ── a2 ── a3
//!        │     └─── a3'
//!        └── a2'
//!   B:  b1 ── b2        (b1 depends on a1)
//! ```

use std::collections::{BTreeMap, BTreeSet};

use crate::identity::{AuthorSecret, Digest};
use crate::message::Message;
use crate::store::MessageStore;

pub struct Fixture {
    pub sa: AuthorSecret,
    pub sb: AuthorSecret,
    pub sc: AuthorSecret,
    pub a1: Digest,
    pub a2: Digest,
    pub a3: Digest,
    pub a2p: Digest,
    pub a3p: Digest,
    pub b1: Digest,
    pub b2: Digest,
    pub store: MessageStore,
    names: BTreeMap<Digest, &'static str>,
}

impl Fixture {
    pub fn new() -> Self {
        let sa = AuthorSecret::derive(b"fixture/author-a");
        let sb = AuthorSecret::derive(b"fixture/author-b");
        let sc = AuthorSecret::derive(b"fixture/author-c");
        let none = BTreeSet::new;

        let mut store = MessageStore::new();
        let mut names = BTreeMap::new();
        let mut add = |name: &'static str, m: Message| {
            let id = m.id();
            assert!(store.insert(m).is_stored(), "fixture message {name} rejected");
            names.insert(id, name);
            id
        };

        let a1 = add("a1", Message::create(&sa, None, none(), &b"a1"[..]).unwrap());
        let a2 = add("a2", Message::create(&sa, Some(a1), none(), &b"a2"[..]).unwrap());
        let a3 = add("a3", Message::create(&sa, Some(a2), none(), &b"a3"[..]).unwrap());
        let a2p = add("a2'", Message::create(&sa, Some(a1), none(), &b"a2'"[..]).unwrap());
        let a3p = add("a3'", Message::create(&sa, Some(a2), none(), &b"a3'"[..]).unwrap());
        let b1 = add(
            "b1",
            Message::create(&sb, None, BTreeSet::from([a1]), &b"b1"[..]).unwrap(),
        );
        let b2 = add("b2", Message::create(&sb, Some(b1), none(), &b"b2"[..]).unwrap());

        Fixture {
            sa,
            sb,
            sc,
            a1,
            a2,
            a3,
            a2p,
            a3p,
            b1,
            b2,
            store,
            names,
        }
    }

    pub fn msg(&self, id: Digest) -> &Message {
        self.store.get(&id).expect("fixture message")
    }

    pub fn name(&self, id: &Digest) -> &'static str {
        self.names.get(id).copied().unwrap_or("?")
    }

    /// Fixture messages in insertion order.
    pub fn messages(&self) -> impl Iterator<Item = &Message> + '_ {
        self.store.iter().map(|(_, m)| m)
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
