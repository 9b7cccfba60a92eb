//! Scenario files.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::Phase;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaBehavior {
    Correct,
    /// Skips each outgoing sync with this probability.
    ByzantineOmit { drop_probability: f64 },
    /// Sends each message and each log only with this probability.
    ByzantinePartial { fraction: f64 },
}

impl ReplicaBehavior {
    pub fn is_correct(&self) -> bool {
        matches!(self, ReplicaBehavior::Correct)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSpec {
    pub id: usize,
    pub behavior: ReplicaBehavior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncGraph {
    /// Undirected edges between replica ids.
    Edges(Vec<(usize, usize)>),
    /// A random spanning tree over the correct replicas, each Byzantine
    /// replica attached to one correct replica, plus `extra_edges` random
    /// edges. Drawn from the run's seed.
    Random { extra_edges: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorBehavior {
    Correct,
    /// Each entry `(index, count)` splits the log after message `index`
    /// into `count` branches. Entries are revealed in order: the branches
    /// of an entry are only published once everything before them is.
    Forking { fork_plan: Vec<(u32, usize)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorSpec {
    pub name: String,
    pub behavior: AuthorBehavior,
    /// Replicas the author delivers to. A correct author delivers every
    /// message to all of them; branch `b` of a forking author goes to
    /// `home[b % home.len()]`.
    pub home: Vec<usize>,
    /// Length of every branch, counting from the first message.
    pub messages: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorExpectation {
    pub phase: Phase,
    /// Height of the expected last: 0 for bottom, 1 for the first message.
    pub last_index: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    #[serde(default)]
    pub authors: BTreeMap<String, AuthorExpectation>,
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub replicas: Vec<ReplicaSpec>,
    pub sync_graph: SyncGraph,
    pub authors: Vec<AuthorSpec>,
    #[serde(default = "one_usize")]
    pub publishes_per_round: usize,
    /// Random pairwise syncs per round; defaults to the number of edges.
    #[serde(default)]
    pub syncs_per_round: Option<usize>,
    pub rounds: u64,
    #[serde(default = "one")]
    pub seed: u64,
    /// Messages each branch of every forking author publishes after the
    /// first quiescence phase.
    #[serde(default)]
    pub post_propagation_publishes: u32,
    #[serde(default)]
    pub expect: Expectations,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn correct_replicas(&self) -> Vec<usize> {
        self.replicas
            .iter()
            .filter(|r| r.behavior.is_correct())
            .map(|r| r.id)
            .collect()
    }

    /// Messages published before any post-propagation publishing.
    pub fn publish_count(&self) -> u64 {
        self.authors
            .iter()
            .map(|a| match &a.behavior {
                AuthorBehavior::Correct => u64::from(a.messages),
                AuthorBehavior::Forking { fork_plan } => {
                    let extra: u64 = fork_plan
                        .iter()
                        .map(|&(i, c)| (c as u64 - 1) * u64::from(a.messages - i))
                        .sum();
                    u64::from(a.messages) + extra
                }
            })
            .sum()
    }

    /// Checks every precondition a run relies on.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        for (i, r) in self.replicas.iter().enumerate() {
            if r.id != i {
                return bad(format!("replica ids must be 0..{}, found {} at position {i}", self.replicas.len(), r.id));
            }
            match r.behavior {
                ReplicaBehavior::ByzantineOmit { drop_probability: p }
                | ReplicaBehavior::ByzantinePartial { fraction: p }
                    if !(0.0..=1.0).contains(&p) =>
                {
                    return bad(format!("replica {i}: probability {p} outside [0, 1]"));
                }
                _ => {}
            }
        }
        let correct = self.correct_replicas();
        if correct.len() < 2 {
            return bad(format!("need at least two correct replicas, found {}", correct.len()));
        }
        if let SyncGraph::Edges(edges) = &self.sync_graph {
            for &(a, b) in edges {
                if a >= self.replicas.len() || b >= self.replicas.len() || a == b {
                    return bad(format!("bad sync edge ({a}, {b})"));
                }
            }
            if !connected(&correct, edges) {
                return bad("sync graph is not connected over the correct replicas".into());
            }
        }
        let mut names = BTreeSet::new();
        for a in &self.authors {
            if !names.insert(a.name.as_str()) {
                return bad(format!("duplicate author {:?}", a.name));
            }
            if a.home.is_empty() || a.home.iter().any(|&h| h >= self.replicas.len()) {
                return bad(format!("author {:?}: home must name existing replicas", a.name));
            }
            if a.messages == 0 {
                return bad(format!("author {:?} publishes no messages", a.name));
            }
            if let AuthorBehavior::Forking { fork_plan } = &a.behavior {
                if fork_plan.is_empty() {
                    return bad(format!("author {:?}: empty fork plan", a.name));
                }
                for &(i, c) in fork_plan {
                    if i >= a.messages || c < 2 {
                        return bad(format!(
                            "author {:?}: fork ({i}, {c}) needs index < {} and at least 2 branches",
                            a.name, a.messages
                        ));
                    }
                }
            }
        }
        for name in self.expect.authors.keys() {
            if !names.contains(name.as_str()) {
                return bad(format!("expectation for unknown author {name:?}"));
            }
        }
        if self.publishes_per_round == 0 {
            return bad("publishes_per_round must be positive".into());
        }
        if self.rounds * (self.publishes_per_round as u64) < self.publish_count() {
            return bad(format!(
                "{} rounds of {} publishes cannot publish all {} messages",
                self.rounds,
                self.publishes_per_round,
                self.publish_count()
            ));
        }
        Ok(())
    }
}

/// Whether `nodes` form one component using only edges between them.
pub(crate) fn connected(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    let set: BTreeSet<usize> = nodes.iter().copied().collect();
    let Some(&start) = nodes.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &(a, b) in edges {
            let other = if a == n {
                b
            } else if b == n {
                a
            } else {
                continue;
            };
            if set.contains(&other) && seen.insert(other) {
                queue.push_back(other);
            }
        }
    }
    seen.len() == set.len()
}

/// Largest shortest-path distance between two of `nodes`, over edges
/// between them. Assumes they are connected.
pub(crate) fn diameter(nodes: &[usize], edges: &[(usize, usize)]) -> usize {
    let set: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut best = 0;
    for &s in nodes {
        let mut dist = BTreeMap::from([(s, 0usize)]);
        let mut queue = VecDeque::from([s]);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            for &(a, b) in edges {
                let other = if a == n {
                    b
                } else if b == n {
                    a
                } else {
                    continue;
                };
                if set.contains(&other) && !dist.contains_key(&other) {
                    dist.insert(other, d + 1);
                    queue.push_back(other);
                }
            }
        }
        best = best.max(dist.values().copied().max().unwrap_or(0));
    }
    best
}
