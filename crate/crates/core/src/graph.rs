//! Relations and queries over a [`MessageStore`].
//!
//! Positions are `Option<Digest>`, with `None` standing for the virtual
//! bottom element that precedes every message (the absent `prev`).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::identity::{Author, Digest};
use crate::store::{Entry, MessageStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("message {0} is not in the store")]
    Unknown(Digest),
    #[error("messages belong to different authors ({0:?} vs {1:?})")]
    AuthorMismatch(Author, Author),
}

impl MessageStore {
    fn entry(&self, id: &Digest) -> Result<&Entry, GraphError> {
        self.index
            .get(id)
            .map(|&i| &self.entries[i])
            .ok_or(GraphError::Unknown(*id))
    }

    fn check(&self, x: Option<&Digest>) -> Result<(), GraphError> {
        match x {
            Some(d) => self.entry(d).map(|_| ()),
            None => Ok(()),
        }
    }

    pub fn author_of(&self, id: &Digest) -> Result<Author, GraphError> {
        Ok(self.entry(id)?.msg.author)
    }

    /// Position on the author's chain: 0 for bottom, 1 for a root.
    pub fn height(&self, x: Option<&Digest>) -> Result<u32, GraphError> {
        match x {
            Some(d) => Ok(self.entry(d)?.height),
            None => Ok(0),
        }
    }

    /// Happens-before over prev and dep edges. Bottom precedes everything.
    pub fn happens_before(&self, x: Option<&Digest>, y: &Digest) -> Result<bool, GraphError> {
        let ye = self.entry(y)?;
        match x {
            None => Ok(true),
            Some(x) => {
                let xi = self.index.get(x).ok_or(GraphError::Unknown(*x))?;
                Ok(ye.ancestors.contains(*xi))
            }
        }
    }

    pub fn leq_m(&self, x: Option<&Digest>, y: Option<&Digest>) -> Result<bool, GraphError> {
        self.check(x)?;
        self.check(y)?;
        match (x, y) {
            (None, _) => Ok(true),
            (Some(_), None) => Ok(false),
            (Some(a), Some(b)) => Ok(a == b || self.happens_before(Some(a), b)?),
        }
    }

    pub fn concurrent_m(&self, x: Option<&Digest>, y: Option<&Digest>) -> Result<bool, GraphError> {
        Ok(!self.leq_m(x, y)? && !self.leq_m(y, x)?)
    }

    /// Causal history: every message `<=` x. Empty for bottom.
    pub fn causal_history(&self, x: Option<&Digest>) -> Result<BTreeSet<Digest>, GraphError> {
        let Some(x) = x else {
            return Ok(BTreeSet::new());
        };
        let e = self.entry(x)?;
        let mut out: BTreeSet<Digest> = e.ancestors.ones().map(|i| self.entries[i].id).collect();
        out.insert(*x);
        Ok(out)
    }

    /// Walks `y`'s prev chain down to height `h`, returning the position there.
    fn ancestor_at(&self, y: Option<&Digest>, h: u32) -> Result<Option<Digest>, GraphError> {
        let mut cur = y.copied();
        let mut ch = self.height(y)?;
        while ch > h {
            let e = self.entry(cur.as_ref().expect("height > 0 means not bottom"))?;
            cur = e.msg.prev;
            ch -= 1;
        }
        Ok(cur)
    }

    fn same_author(&self, x: Option<&Digest>, y: Option<&Digest>) -> Result<bool, GraphError> {
        match (x, y) {
            (Some(a), Some(b)) => Ok(self.author_of(a)? == self.author_of(b)?),
            _ => {
                self.check(x)?;
                self.check(y)?;
                Ok(true)
            }
        }
    }

    fn require_same_author(&self, x: Option<&Digest>, y: Option<&Digest>) -> Result<(), GraphError> {
        if let (Some(a), Some(b)) = (x, y) {
            let (aa, ab) = (self.author_of(a)?, self.author_of(b)?);
            if aa != ab {
                return Err(GraphError::AuthorMismatch(aa, ab));
            }
        }
        self.check(x)?;
        self.check(y)
    }

    /// Happens-before restricted to prev edges. Cross-author pairs are unrelated.
    pub fn log_happens_before(&self, x: Option<&Digest>, y: &Digest) -> Result<bool, GraphError> {
        if !self.same_author(x, Some(y))? {
            return Ok(false);
        }
        let hx = self.height(x)?;
        if hx >= self.height(Some(y))? {
            return Ok(false);
        }
        Ok(self.ancestor_at(Some(y), hx)?.as_ref() == x)
    }

    pub fn leq_log(&self, x: Option<&Digest>, y: Option<&Digest>) -> Result<bool, GraphError> {
        match (x, y) {
            (None, _) => {
                self.check(y)?;
                Ok(true)
            }
            (Some(a), None) => {
                self.check(Some(a))?;
                Ok(false)
            }
            (Some(a), Some(b)) if a == b => {
                self.check(x)?;
                Ok(true)
            }
            (Some(_), Some(b)) => self.log_happens_before(x, b),
        }
    }

    pub fn concurrent_log(&self, x: Option<&Digest>, y: Option<&Digest>) -> Result<bool, GraphError> {
        Ok(!self.leq_log(x, y)? && !self.leq_log(y, x)?)
    }

    /// The prev chain ending at `x`, inclusive. Empty for bottom.
    pub fn log_history(&self, x: Option<&Digest>) -> Result<BTreeSet<Digest>, GraphError> {
        let mut out = BTreeSet::new();
        let mut cur = x.copied();
        while let Some(d) = cur {
            cur = self.entry(&d)?.msg.prev;
            out.insert(d);
        }
        Ok(out)
    }

    /// `]from, to]` on a single author's log.
    pub fn log_range(
        &self,
        from: Option<&Digest>,
        to: Option<&Digest>,
    ) -> Result<BTreeSet<Digest>, GraphError> {
        self.require_same_author(from, to)?;
        let lower = self.log_history(from)?;
        Ok(self
            .log_history(to)?
            .into_iter()
            .filter(|d| !lower.contains(d))
            .collect())
    }

    /// Greatest lower bound of two positions on the same author's log.
    pub fn log_prefix(
        &self,
        x: Option<&Digest>,
        y: Option<&Digest>,
    ) -> Result<Option<Digest>, GraphError> {
        self.require_same_author(x, y)?;
        let h = self.height(x)?.min(self.height(y)?);
        let mut a = self.ancestor_at(x, h)?;
        let mut b = self.ancestor_at(y, h)?;
        while a != b {
            // Equal heights, so both reach bottom together.
            a = self.entry(a.as_ref().expect("not bottom"))?.msg.prev;
            b = self.entry(b.as_ref().expect("not bottom"))?.msg.prev;
        }
        Ok(a)
    }

    /// Messages of `]P, x] ∪ ]P, y]` whose prev is `P = log_prefix(x, y)`.
    ///
    /// On concurrent inputs these are the first message of each branch, which
    /// together prove the fork. Comparable inputs give at most one element.
    pub fn fork_proof(
        &self,
        x: Option<&Digest>,
        y: Option<&Digest>,
    ) -> Result<BTreeSet<Digest>, GraphError> {
        let p = self.log_prefix(x, y)?;
        let hp = self.height(p.as_ref())?;
        let mut out = BTreeSet::new();
        for side in [x, y] {
            if self.height(side)? > hp {
                let first = self.ancestor_at(side, hp + 1)?;
                out.insert(first.expect("height above prefix"));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Fixture;

    #[test]
    fn happens_before_examples() {
        let fx = Fixture::new();
        let s = &fx.store;
        assert!(s.happens_before(Some(&fx.a1), &fx.a3).unwrap());
        assert!(!s.happens_before(Some(&fx.a3), &fx.a1).unwrap());
        assert!(s.happens_before(None, &fx.b1).unwrap());
        assert!(s.happens_before(Some(&fx.a1), &fx.b2).unwrap());
        assert!(!s.happens_before(Some(&fx.a1), &fx.a1).unwrap());
        let unknown = Digest::of(b"nope");
        assert_eq!(
            s.happens_before(Some(&unknown), &fx.a1),
            Err(GraphError::Unknown(unknown))
        );
    }

    #[test]
    fn order_and_concurrency() {
        let fx = Fixture::new();
        let s = &fx.store;
        assert!(s.leq_m(Some(&fx.a2), Some(&fx.a2)).unwrap());
        assert!(s.concurrent_m(Some(&fx.a2), Some(&fx.a2p)).unwrap());
        assert!(!s.concurrent_m(Some(&fx.a1), Some(&fx.b1)).unwrap());
    }

    #[test]
    fn histories() {
        let fx = Fixture::new();
        let s = &fx.store;
        assert_eq!(s.causal_history(Some(&fx.a1)).unwrap(), BTreeSet::from([fx.a1]));
        assert_eq!(
            s.causal_history(Some(&fx.b1)).unwrap(),
            BTreeSet::from([fx.a1, fx.b1])
        );
        assert!(s.causal_history(None).unwrap().is_empty());
        assert_eq!(
            s.log_history(Some(&fx.a3)).unwrap(),
            BTreeSet::from([fx.a1, fx.a2, fx.a3])
        );
    }

    #[test]
    fn log_relations_ignore_deps() {
        let fx = Fixture::new();
        let s = &fx.store;
        assert!(s.leq_log(Some(&fx.a1), Some(&fx.a3)).unwrap());
        assert!(!s.leq_log(Some(&fx.a1), Some(&fx.b1)).unwrap());
        assert!(s.leq_log(None, Some(&fx.a1)).unwrap());
        assert!(!s.leq_log(Some(&fx.a1), None).unwrap());
        assert!(s.concurrent_log(Some(&fx.a2p), Some(&fx.a3)).unwrap());
    }

    #[test]
    fn ranges() {
        let fx = Fixture::new();
        let s = &fx.store;
        assert_eq!(
            s.log_range(Some(&fx.a1), Some(&fx.a3)).unwrap(),
            BTreeSet::from([fx.a2, fx.a3])
        );
        assert!(s.log_range(Some(&fx.a3), Some(&fx.a3)).unwrap().is_empty());
        assert_eq!(
            s.log_range(None, Some(&fx.a2)).unwrap(),
            BTreeSet::from([fx.a1, fx.a2])
        );
    }

    #[test]
    fn prefixes_and_proofs() {
        let fx = Fixture::new();
        let s = &fx.store;
        assert_eq!(s.log_prefix(Some(&fx.a2), Some(&fx.a3)).unwrap(), Some(fx.a2));
        assert_eq!(s.log_prefix(Some(&fx.a2), Some(&fx.a2p)).unwrap(), Some(fx.a1));
        assert_eq!(s.log_prefix(Some(&fx.a3p), Some(&fx.a2p)).unwrap(), Some(fx.a1));
        assert_eq!(s.log_prefix(None, Some(&fx.a3)).unwrap(), None);
        assert!(matches!(
            s.log_prefix(Some(&fx.a1), Some(&fx.b1)),
            Err(GraphError::AuthorMismatch(..))
        ));

        assert_eq!(
            s.fork_proof(Some(&fx.a2), Some(&fx.a2p)).unwrap(),
            BTreeSet::from([fx.a2, fx.a2p])
        );
        assert_eq!(
            s.fork_proof(Some(&fx.a3p), Some(&fx.a2p)).unwrap(),
            BTreeSet::from([fx.a2, fx.a2p])
        );
        assert_eq!(
            s.fork_proof(Some(&fx.a2), Some(&fx.a3)).unwrap(),
            BTreeSet::from([fx.a3])
        );
        assert!(s.fork_proof(Some(&fx.a3), Some(&fx.a3)).unwrap().is_empty());
    }

    #[test]
    fn roots_fork_at_bottom() {
        let fx = Fixture::new();
        let mut s = fx.store.clone();
        let r = crate::message::Message::create(&fx.sa, None, BTreeSet::new(), &b"r'"[..]).unwrap();
        let rp = r.id();
        s.insert(r);
        assert_eq!(s.log_prefix(Some(&fx.a1), Some(&rp)).unwrap(), None);
        assert_eq!(
            s.fork_proof(Some(&fx.a3), Some(&rp)).unwrap(),
            BTreeSet::from([fx.a1, rp])
        );
    }
}
