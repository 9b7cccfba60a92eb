//! Frontier: a grow-only set of logs with at most one log per author.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::GraphError;
use crate::identity::{Author, Digest};
use crate::log::{Log, LogError, LogValidityReport, OrderRule, Phase};
use crate::store::MessageStore;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontierError {
    #[error("rejected invalid log of {author:?}: {report:?}")]
    InvalidLog {
        author: Author,
        report: LogValidityReport,
    },
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: second log for author {author:?} (F2)")]
    DuplicateAuthor { line: usize, author: Author },
}

/// Keyed by author internally, so F2 holds by construction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Frontier {
    logs: BTreeMap<Author, Log>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn get(&self, author: &Author) -> Option<&Log> {
        self.logs.get(author)
    }

    pub fn logs(&self) -> impl Iterator<Item = &Log> + '_ {
        self.logs.values()
    }

    pub fn authors(&self) -> impl Iterator<Item = &Author> + '_ {
        self.logs.keys()
    }

    /// Every message reachable from a last or a fork member.
    pub fn messages(&self, store: &MessageStore) -> Result<BTreeSet<Digest>, GraphError> {
        let mut out = BTreeSet::new();
        for log in self.logs.values() {
            out.extend(store.causal_history(log.last.as_ref())?);
            for m in &log.forks {
                out.extend(store.causal_history(Some(m))?);
            }
        }
        Ok(out)
    }

    /// Merges `log` into the frontier. Invalid logs are rejected and leave
    /// the frontier as it was.
    pub fn update(&self, store: &MessageStore, log: &Log) -> Result<Frontier, FrontierError> {
        let report = log.validate(store);
        if !report.valid() {
            return Err(FrontierError::InvalidLog {
                author: log.author,
                report,
            });
        }
        let mut next = self.clone();
        next.merge_log(store, log)?;
        Ok(next)
    }

    /// In-place [`Frontier::update`] for a log the caller already validated.
    pub(crate) fn merge_log(&mut self, store: &MessageStore, log: &Log) -> Result<(), LogError> {
        let merged = match self.logs.get(&log.author) {
            Some(existing) => log.join(existing, store)?,
            None => log.clone(),
        };
        self.logs.insert(log.author, merged);
        Ok(())
    }

    pub(crate) fn replace(&mut self, log: Log) {
        self.logs.insert(log.author, log);
    }

    pub fn leq(&self, other: &Frontier, store: &MessageStore) -> Result<bool, LogError> {
        self.leq_with(other, store, OrderRule::default())
    }

    pub fn leq_with(
        &self,
        other: &Frontier,
        store: &MessageStore,
        rule: OrderRule,
    ) -> Result<bool, LogError> {
        for (author, log) in &self.logs {
            match other.logs.get(author) {
                None => return Ok(false),
                Some(theirs) => {
                    if !log.leq_with(theirs, store, rule)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    pub fn join(&self, other: &Frontier, store: &MessageStore) -> Result<Frontier, LogError> {
        let mut out = self.clone();
        for log in other.logs.values() {
            out.merge_log(store, log)?;
        }
        Ok(out)
    }

    /// Validity reports for every log that fails its checks (F1).
    pub fn invalid_logs(&self, store: &MessageStore) -> Vec<(Author, LogValidityReport)> {
        self.logs
            .values()
            .map(|l| (l.author, l.validate(store)))
            .filter(|(_, r)| !r.valid())
            .collect()
    }

    pub fn is_valid(&self, store: &MessageStore) -> bool {
        self.invalid_logs(store).is_empty()
    }

    /// Same authors, pairwise equivalent logs.
    pub fn equivalent(&self, other: &Frontier) -> bool {
        self.logs.len() == other.logs.len()
            && self
                .logs
                .iter()
                .zip(other.logs.iter())
                .all(|((a, l), (b, r))| a == b && l.equivalent(r))
    }

    /// Canonical text form: one line per author in author order,
    /// `author phase last forks`, with `-` for bottom or no forks and fork
    /// digests comma-separated in ascending order. Equal snapshots mean
    /// equal states.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for log in self.logs.values() {
            let last = log.last.map_or_else(|| "-".to_string(), |d| d.to_hex());
            let forks = if log.forks.is_empty() {
                "-".to_string()
            } else {
                log.forks
                    .iter()
                    .map(Digest::to_hex)
                    .collect::<Vec<_>>()
                    .join(",")
            };
            writeln!(out, "{} {} {} {}", log.author, log.phase(), last, forks)
                .expect("writing to a String");
        }
        out
    }

    /// Parses a snapshot into the logs it lists and the phase each line
    /// claims. Nothing is validated against a store here.
    pub fn parse_snapshot(text: &str) -> Result<Vec<(Log, Phase)>, SnapshotError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |reason: String| SnapshotError::Malformed { line, reason };
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(' ').collect();
            let [author, phase, last, forks] = fields[..] else {
                return Err(bad(format!("expected 4 fields, got {}", fields.len())));
            };
            let author = Author::from_hex(author).map_err(|e| bad(e.to_string()))?;
            let phase = match phase {
                "growing" => Phase::Growing,
                "shrinking" => Phase::Shrinking,
                other => return Err(bad(format!("unknown phase {other:?}"))),
            };
            let last = match last {
                "-" => None,
                h => Some(Digest::from_hex(h).map_err(|e| bad(e.to_string()))?),
            };
            let forks = match forks {
                "-" => BTreeSet::new(),
                list => list
                    .split(',')
                    .map(Digest::from_hex)
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(e.to_string()))?,
            };
            if !seen.insert(author) {
                return Err(SnapshotError::DuplicateAuthor { line, author });
            }
            out.push((
                Log {
                    author,
                    last,
                    forks,
                },
                phase,
            ));
        }
        Ok(out)
    }
}

impl FromIterator<Log> for Frontier {
    /// Later logs of the same author replace earlier ones; no merging.
    fn from_iter<I: IntoIterator<Item = Log>>(iter: I) -> Self {
        Frontier {
            logs: iter.into_iter().map(|l| (l.author, l)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Fixture;

    #[test]
    fn empty_frontier() {
        let fx = Fixture::new();
        let f = Frontier::new();
        assert!(f.messages(&fx.store).unwrap().is_empty());
        let other: Frontier = [Log::growing(fx.sa.author(), Some(fx.a1))].into_iter().collect();
        assert!(f.leq(&other, &fx.store).unwrap());
        assert!(!other.leq(&f, &fx.store).unwrap());
    }

    #[test]
    fn messages_include_fork_branches() {
        let fx = Fixture::new();
        let s = &fx.store;
        let a = fx.sa.author();
        let f: Frontier = [Log::growing(a, Some(fx.a3))].into_iter().collect();
        assert_eq!(f.messages(s).unwrap(), BTreeSet::from([fx.a1, fx.a2, fx.a3]));
        let f: Frontier = [Log::shrinking(a, Some(fx.a1), BTreeSet::from([fx.a2, fx.a2p]))]
            .into_iter()
            .collect();
        assert_eq!(f.messages(s).unwrap(), BTreeSet::from([fx.a1, fx.a2, fx.a2p]));
        let f: Frontier = [Log::new(a)].into_iter().collect();
        assert!(f.messages(s).unwrap().is_empty());
    }

    #[test]
    fn update_cases() {
        let fx = Fixture::new();
        let s = &fx.store;
        let a = fx.sa.author();
        let f = Frontier::new().update(s, &Log::growing(a, Some(fx.a2))).unwrap();
        assert_eq!(f.len(), 1);
        let g = f.update(s, &Log::growing(a, Some(fx.a3))).unwrap();
        assert_eq!(g.get(&a), Some(&Log::growing(a, Some(fx.a3))));
        let h = f.update(s, &Log::growing(a, Some(fx.a2p))).unwrap();
        assert_eq!(
            h.get(&a),
            Some(&Log::shrinking(a, Some(fx.a1), BTreeSet::from([fx.a2, fx.a2p])))
        );
        let bad = Log::shrinking(a, Some(fx.a1), BTreeSet::from([fx.a2]));
        match f.update(s, &bad) {
            Err(FrontierError::InvalidLog { report, .. }) => {
                assert!(report.violates(crate::log::Property::FL6))
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn order_and_join() {
        let fx = Fixture::new();
        let s = &fx.store;
        let (a, b) = (fx.sa.author(), fx.sb.author());
        let fa: Frontier = [Log::growing(a, Some(fx.a2))].into_iter().collect();
        let fab: Frontier = [Log::growing(a, Some(fx.a2)), Log::growing(b, Some(fx.b1))]
            .into_iter()
            .collect();
        assert!(fa.leq(&fab, s).unwrap());
        assert!(fab.leq(&fab, s).unwrap());
        let fa3: Frontier = [Log::growing(a, Some(fx.a3))].into_iter().collect();
        assert!(fa.leq(&fa3, s).unwrap());
        assert!(!fa3.leq(&fa, s).unwrap());

        let fb: Frontier = [Log::growing(b, Some(fx.b1))].into_iter().collect();
        assert_eq!(fa.join(&fb, s).unwrap(), fab);
        assert_eq!(fa.join(&fa3, s).unwrap(), fa3);
        assert_eq!(fab.join(&fab, s).unwrap(), fab);
    }

    #[test]
    fn snapshot_roundtrip_and_f2() {
        let fx = Fixture::new();
        let (a, b) = (fx.sa.author(), fx.sb.author());
        let f: Frontier = [
            Log::shrinking(a, Some(fx.a1), BTreeSet::from([fx.a2, fx.a2p])),
            Log::new(b),
        ]
        .into_iter()
        .collect();
        let text = f.snapshot();
        assert_eq!(text.lines().count(), 2);
        let parsed = Frontier::parse_snapshot(&text).unwrap();
        let back: Frontier = parsed.into_iter().map(|(l, _)| l).collect();
        assert_eq!(back, f);
        let first = text.lines().next().unwrap();
        let dup = format!("{first}\n{first}\n");
        assert!(matches!(
            Frontier::parse_snapshot(&dup),
            Err(SnapshotError::DuplicateAuthor { line: 2, .. })
        ));
        assert!(Frontier::parse_snapshot("zz growing - -").is_err());
    }
}
