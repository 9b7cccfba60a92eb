//! Brute-force reference implementations of the graph queries.
//!
//! Only message fields are read here; nothing from [`crate::graph`] or the
//! store's memoized ancestor sets is used.

use std::collections::{BTreeMap, BTreeSet};

use crate::identity::{Author, Digest};
use crate::message::Message;

pub struct RawGraph {
    msgs: BTreeMap<Digest, (Author, Option<Digest>, BTreeSet<Digest>)>,
}

impl RawGraph {
    pub fn new<'a>(msgs: impl IntoIterator<Item = &'a Message>) -> Self {
        RawGraph {
            msgs: msgs
                .into_iter()
                .map(|m| (m.id(), (m.author, m.prev, m.deps.clone())))
                .collect(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &Digest> + '_ {
        self.msgs.keys()
    }

    pub fn author(&self, d: &Digest) -> Author {
        self.msgs[d].0
    }

    fn prev(&self, d: &Digest) -> Option<Digest> {
        self.msgs[d].1
    }

    /// Depth-first search from `y` along prev and dep edges.
    pub fn reaches(&self, x: &Digest, y: &Digest) -> bool {
        let mut stack: Vec<Digest> = self.parents(y).collect();
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == *x {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.parents(&n));
            }
        }
        false
    }

    fn parents(&self, d: &Digest) -> impl Iterator<Item = Digest> + '_ {
        let (_, prev, deps) = &self.msgs[d];
        prev.iter().chain(deps.iter()).copied()
    }

    pub fn leq_m(&self, x: Option<&Digest>, y: Option<&Digest>) -> bool {
        match (x, y) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a == b || self.reaches(a, b),
        }
    }

    pub fn history(&self, x: Option<&Digest>) -> BTreeSet<Digest> {
        self.ids()
            .filter(|y| self.leq_m(Some(y), x))
            .copied()
            .collect()
    }

    pub fn log_history(&self, x: Option<&Digest>) -> BTreeSet<Digest> {
        let mut out = BTreeSet::new();
        let mut cur = x.copied();
        while let Some(d) = cur {
            out.insert(d);
            cur = self.prev(&d);
        }
        out
    }

    pub fn leq_log(&self, x: Option<&Digest>, y: Option<&Digest>) -> bool {
        match x {
            None => true,
            Some(a) => self.log_history(y).contains(a),
        }
    }

    pub fn range(&self, from: Option<&Digest>, to: Option<&Digest>) -> BTreeSet<Digest> {
        let low = self.log_history(from);
        self.log_history(to)
            .into_iter()
            .filter(|d| !low.contains(d))
            .collect()
    }

    /// The `<=_log`-maximum of the common prev-chain history; bottom if empty.
    pub fn log_prefix(&self, x: Option<&Digest>, y: Option<&Digest>) -> Option<Digest> {
        let common: BTreeSet<Digest> = self
            .log_history(x)
            .intersection(&self.log_history(y))
            .copied()
            .collect();
        let below: Vec<BTreeSet<Digest>> =
            common.iter().map(|c| self.log_history(Some(c))).collect();
        // c is maximal when no other common element has c in its history.
        let maxima: Vec<Digest> = common
            .iter()
            .filter(|c| {
                common
                    .iter()
                    .zip(&below)
                    .all(|(o, h)| o == *c || !h.contains(c))
            })
            .copied()
            .collect();
        assert!(maxima.len() <= 1, "common history of two chains is a chain");
        maxima.first().copied()
    }

    pub fn fork_proof(&self, x: Option<&Digest>, y: Option<&Digest>) -> BTreeSet<Digest> {
        let p = self.log_prefix(x, y);
        self.range(p.as_ref(), x)
            .union(&self.range(p.as_ref(), y))
            .filter(|m| self.prev(m) == p)
            .copied()
            .collect()
    }
}
