//! Deterministic multi-replica simulation.
//!
//! Replicas exchange their full frontier state over a sync graph while
//! author actors publish to their home replicas. A forking author signs
//! several messages with the same predecessor and hands each branch to a
//! different replica. A run has three phases:
//!
//! 1. `rounds` rounds, each with some publishes and random pairwise syncs
//! 2. quiescence: `2 × diameter` sweeps over every edge between correct
//!    replicas, in both directions
//! 3. optionally, every forking branch is extended and quiescence repeats
//!
//! Everything random is drawn from one generator seeded by the run seed, so
//! `(scenario, seed)` fixes the whole run and its report byte for byte.

pub mod author;
pub mod replica;
pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::identity::{Author, Digest};
use crate::log::{Log, Phase};
use crate::rng::SimRng;
use crate::store::MessageStore;
pub use author::AuthorActor;
pub use replica::{sync, Misbehavior, Replica};
pub use scenario::{
    AuthorBehavior, AuthorExpectation, AuthorSpec, Expectations, ReplicaBehavior, ReplicaSpec,
    Scenario, ScenarioError, SyncGraph,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuthorReport {
    pub name: String,
    pub author: String,
    pub forking: bool,
    /// Final state at the correct replicas, taken from the lowest id.
    pub phase: Phase,
    pub last: Option<String>,
    pub last_index: u32,
    pub forks: Vec<String>,
    /// What every correct replica must end with.
    pub expected_phase: Phase,
    pub expected_last_index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub author: String,
    pub replica: usize,
    pub round: u64,
    pub proof: Vec<String>,
}

/// How long a forked log kept growing somewhere after the fork was first
/// detected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub author: String,
    pub first_detection: Option<u64>,
    /// Round by which every correct replica held a proof.
    pub full_propagation: Option<u64>,
    pub window_rounds: Option<u64>,
    /// Rounds after the first detection in which some correct replica
    /// still extended the log.
    pub extension_rounds_after_detection: u64,
    /// Times a correct replica's last moved after every correct replica
    /// held a proof. Must be zero.
    pub post_propagation_advances: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MisbehaviorRecord {
    pub replica: usize,
    pub author: String,
    pub reason: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub converged: bool,
    pub rounds_to_convergence: u64,
    pub total_rounds: u64,
    pub authors: Vec<AuthorReport>,
    pub fork_detections: Vec<Detection>,
    pub windows: Vec<Window>,
    pub misbehavior: Vec<MisbehaviorRecord>,
    pub rejections: BTreeMap<String, u64>,
    /// Frontier snapshot shared by the correct replicas when converged.
    pub snapshot: String,
    /// Every violated check, empty on success.
    pub failures: Vec<String>,
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.converged && self.failures.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn author(&self, name: &str) -> Option<&AuthorReport> {
        self.authors.iter().find(|a| a.name == name)
    }
}

/// A run in progress. Exposed so tests can drive and inspect it.
pub struct Sim {
    pub scenario: Scenario,
    pub seed: u64,
    pub replicas: Vec<Replica>,
    pub authors: Vec<AuthorActor>,
    pub edges: Vec<(usize, usize)>,
    rng: SimRng,
    round: u64,
    last_disagreement: u64,
    detections: Vec<Detection>,
    tracks: BTreeMap<Author, Track>,
    failures: Vec<String>,
}

#[derive(Default)]
struct Track {
    first_detection: Option<u64>,
    full_propagation: Option<u64>,
    extension_rounds: BTreeSet<u64>,
    post_propagation_advances: u64,
}

impl Sim {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Sim, ScenarioError> {
        scenario.check()?;
        let mut rng = SimRng::new(seed);
        let edges = match &scenario.sync_graph {
            SyncGraph::Edges(e) => e.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
            SyncGraph::Random { extra_edges } => random_graph(scenario, *extra_edges, &mut rng),
        };
        let edges: Vec<(usize, usize)> = edges
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let replicas = scenario
            .replicas
            .iter()
            .map(|r| Replica::new(r.id, r.behavior))
            .collect();
        let label = if scenario.name.is_empty() {
            "scenario"
        } else {
            scenario.name.as_str()
        };
        let authors = scenario
            .authors
            .iter()
            .map(|a| AuthorActor::new(a, label))
            .collect();
        Ok(Sim {
            scenario: scenario.clone(),
            seed,
            replicas,
            authors,
            edges,
            rng,
            round: 0,
            last_disagreement: 0,
            detections: Vec::new(),
            tracks: BTreeMap::new(),
            failures: Vec::new(),
        })
    }

    fn correct(&self) -> impl Iterator<Item = &Replica> + '_ {
        self.replicas.iter().filter(|r| r.is_correct())
    }

    fn sync_pair(&mut self, receiver: usize, sender: usize) {
        let (r, s) = if receiver < sender {
            let (lo, hi) = self.replicas.split_at_mut(sender);
            (&mut lo[receiver], &hi[0])
        } else {
            let (lo, hi) = self.replicas.split_at_mut(receiver);
            (&mut hi[0], &lo[sender])
        };
        replica::sync(r, s, &mut self.rng);
    }

    /// One round of the main phase.
    fn main_round(&mut self) {
        for _ in 0..self.scenario.publishes_per_round {
            let ready: Vec<usize> = (0..self.authors.len())
                .filter(|&i| self.authors[i].pending())
                .collect();
            if ready.is_empty() {
                break;
            }
            let a = *self.rng.pick(&ready);
            self.authors[a].publish_next(&mut self.replicas);
        }
        let syncs = self.scenario.syncs_per_round.unwrap_or(self.edges.len());
        for _ in 0..syncs {
            let (a, b) = *self.rng.pick(&self.edges);
            if self.rng.chance(0.5) {
                self.sync_pair(a, b);
            } else {
                self.sync_pair(b, a);
            }
        }
    }

    /// Every edge between two correct replicas, both directions, in edge
    /// order. Byzantine replicas may stay silent for good, so they are left
    /// out once publishing stops.
    fn sweep(&mut self) {
        for i in 0..self.edges.len() {
            let (a, b) = self.edges[i];
            if self.replicas[a].is_correct() && self.replicas[b].is_correct() {
                self.sync_pair(a, b);
                self.sync_pair(b, a);
            }
        }
    }

    fn quiescence(&mut self) {
        let correct = self.scenario.correct_replicas();
        let sweeps = 2 * scenario::diameter(&correct, &self.edges).max(1);
        for _ in 0..sweeps {
            self.step(|sim| sim.sweep());
        }
    }

    /// Runs one round and records what changed.
    fn step(&mut self, f: impl FnOnce(&mut Sim)) {
        let before = self.forked_lasts();
        f(self);
        self.round += 1;
        self.observe(&before);
    }

    fn forked_lasts(&self) -> BTreeMap<(Author, usize), Log> {
        let mut out = BTreeMap::new();
        for a in self.authors.iter().filter(|a| a.is_forking()) {
            for r in self.correct() {
                if let Some(l) = r.frontier.get(&a.author) {
                    out.insert((a.author, r.id), l.clone());
                }
            }
        }
        out
    }

    fn observe(&mut self, before: &BTreeMap<(Author, usize), Log>) {
        let round = self.round;
        let snaps: BTreeSet<String> = self.correct().map(Replica::snapshot).collect();
        if snaps.len() > 1 {
            self.last_disagreement = round;
        }
        let correct_ids: Vec<usize> = self.correct().map(|r| r.id).collect();
        for a in self.authors.iter().filter(|a| a.is_forking()) {
            let track = self.tracks.entry(a.author).or_default();
            let propagated_before = track.full_propagation.is_some();
            let mut holders = 0;
            for &rid in &correct_ids {
                let r = &self.replicas[rid];
                let Some(now) = r.frontier.get(&a.author) else {
                    continue;
                };
                let prev = before.get(&(a.author, rid));
                let was_shrinking = prev.is_some_and(|l| !l.is_growing());
                if !now.is_growing() {
                    holders += 1;
                    if !was_shrinking {
                        self.detections.push(Detection {
                            author: a.name.clone(),
                            replica: rid,
                            round,
                            proof: now.forks.iter().map(Digest::to_hex).collect(),
                        });
                        track.first_detection.get_or_insert(round);
                    }
                }
                let advanced = match prev {
                    Some(p) => p.last != now.last && r.store.leq_log(p.last.as_ref(), now.last.as_ref()).unwrap_or(false),
                    None => now.last.is_some(),
                };
                if advanced {
                    if track.first_detection.is_some_and(|d| d < round) {
                        track.extension_rounds.insert(round);
                    }
                    if propagated_before {
                        track.post_propagation_advances += 1;
                    }
                }
            }
            if holders == correct_ids.len() && track.full_propagation.is_none() {
                track.full_propagation = Some(round);
            }
        }
    }

    /// Runs the whole scenario.
    pub fn run(mut self) -> SimReport {
        self.execute()
    }

    /// Runs the whole scenario, leaving the final state in place.
    pub fn execute(&mut self) -> SimReport {
        while self.round < self.scenario.rounds {
            self.step(|sim| sim.main_round());
        }
        let leftover: usize = self.authors.iter().filter(|a| a.pending()).count();
        if leftover > 0 {
            self.failures.push(format!("{leftover} authors still had messages to publish"));
        }
        self.quiescence();

        if self.scenario.post_propagation_publishes > 0 {
            for _ in 0..self.scenario.post_propagation_publishes {
                self.step(|sim| {
                    for a in sim.authors.iter_mut().filter(|a| a.is_forking()) {
                        a.extend_all(&mut sim.replicas);
                    }
                });
            }
            self.quiescence();
        }

        // One more sweep must change nothing.
        let settled: Vec<String> = self.correct().map(Replica::snapshot).collect();
        self.step(|sim| sim.sweep());
        let after: Vec<String> = self.correct().map(Replica::snapshot).collect();
        if settled != after {
            self.failures.push("correct frontiers still changed after quiescence".into());
        }
        self.finish()
    }

    fn finish(&mut self) -> SimReport {
        let snaps: BTreeSet<String> = self.correct().map(Replica::snapshot).collect();
        let converged = snaps.len() == 1;
        if !converged {
            self.failures.push(format!(
                "{} distinct snapshots among correct replicas",
                snaps.len()
            ));
        }
        for r in self.replicas.iter().filter(|r| r.is_correct()) {
            for (author, report) in r.frontier.invalid_logs(&r.store) {
                self.failures.push(format!(
                    "replica {} holds an invalid log for {author}: {:?}",
                    r.id, report.violated
                ));
            }
        }

        let reference = self.correct().next().expect("two correct replicas").clone();
        let mut authors = Vec::new();
        for a in &self.authors {
            let (expected_phase, expected_last) = expected_state(&self.replicas, &a.author);
            let log = reference
                .frontier
                .get(&a.author)
                .cloned()
                .unwrap_or_else(|| Log::new(a.author));
            let store = &reference.store;
            let height = |d: Option<&Digest>| store.height(d).unwrap_or(0);
            for r in self.replicas.iter().filter(|r| r.is_correct()) {
                let mine = r.frontier.get(&a.author);
                let ok = mine.is_some_and(|l| l.phase() == expected_phase && l.last == expected_last);
                if !ok {
                    self.failures.push(format!(
                        "replica {} ends with {} for {}, expected {expected_phase} at {}",
                        r.id,
                        mine.map_or_else(|| "nothing".to_string(), |l| format!("{l}")),
                        a.name,
                        short(expected_last.as_ref()),
                    ));
                }
            }
            let expected_last_index = height(expected_last.as_ref());
            if let Some(exp) = self.scenario.expect.authors.get(&a.name) {
                if exp.phase != expected_phase || exp.last_index != expected_last_index {
                    self.failures.push(format!(
                        "{}: scenario expects {} at index {}, run reached {expected_phase} at index {expected_last_index}",
                        a.name, exp.phase, exp.last_index
                    ));
                }
            }
            authors.push(AuthorReport {
                name: a.name.clone(),
                author: a.author.to_hex(),
                forking: a.is_forking(),
                phase: log.phase(),
                last: log.last.map(|d| d.to_hex()),
                last_index: height(log.last.as_ref()),
                forks: log.forks.iter().map(Digest::to_hex).collect(),
                expected_phase,
                expected_last_index,
            });
        }

        let mut windows = Vec::new();
        for a in self.authors.iter().filter(|a| a.is_forking()) {
            let t = self.tracks.remove(&a.author).unwrap_or_default();
            if t.post_propagation_advances > 0 {
                self.failures.push(format!(
                    "{}: log advanced {} times after every correct replica held a proof",
                    a.name, t.post_propagation_advances
                ));
            }
            windows.push(Window {
                author: a.name.clone(),
                first_detection: t.first_detection,
                full_propagation: t.full_propagation,
                window_rounds: t
                    .full_propagation
                    .zip(t.first_detection)
                    .map(|(f, d)| f - d),
                extension_rounds_after_detection: t.extension_rounds.len() as u64,
                post_propagation_advances: t.post_propagation_advances,
            });
        }

        let names: BTreeMap<Author, String> = self
            .authors
            .iter()
            .map(|a| (a.author, a.name.clone()))
            .collect();
        let mut misbehavior = Vec::new();
        let mut rejections = BTreeMap::new();
        for r in &self.replicas {
            for (author, m) in &r.misbehavior {
                misbehavior.push(MisbehaviorRecord {
                    replica: r.id,
                    author: names.get(author).cloned().unwrap_or_else(|| author.to_hex()),
                    reason: m.reason.label().to_string(),
                    message: m.message.id().to_hex(),
                });
            }
            if r.is_correct() {
                for (k, v) in &r.rejections {
                    *rejections.entry(k.clone()).or_insert(0) += v;
                }
            }
        }

        SimReport {
            scenario: self.scenario.name.clone(),
            seed: self.seed,
            converged,
            rounds_to_convergence: self.last_disagreement,
            total_rounds: self.round,
            authors,
            fork_detections: std::mem::take(&mut self.detections),
            windows,
            misbehavior,
            rejections,
            snapshot: if converged {
                snaps.into_iter().next().unwrap_or_default()
            } else {
                String::new()
            },
            failures: std::mem::take(&mut self.failures),
        }
    }
}

fn short(d: Option<&Digest>) -> String {
    d.map_or_else(|| "bottom".into(), |d| d.to_hex()[..8].to_string())
}

/// The state every correct replica must reach for `author`: growing at the
/// tip if the messages named by correct frontiers form one chain, otherwise
/// shrinking at the greatest lower bound of all branch tips.
///
/// Messages a replica stored but no correct log ever referenced (a partial
/// forwarder can leave those behind) are not counted.
fn expected_state(replicas: &[Replica], author: &Author) -> (Phase, Option<Digest>) {
    let mut all = MessageStore::new();
    for r in replicas.iter().filter(|r| r.is_correct()) {
        let named = r.frontier.messages(&r.store).expect("valid frontier");
        // Store order is topological, so every insert finds its parents.
        for (id, m) in r.store.iter() {
            if named.contains(id) {
                all.insert(m.clone());
            }
        }
    }
    let own: Vec<Digest> = all.by_author(author).copied().collect();
    let tips: Vec<Digest> = own
        .iter()
        .filter(|d| !own.iter().any(|c| all.get(c).is_some_and(|m| m.prev == Some(**d))))
        .copied()
        .collect();
    match tips.as_slice() {
        [] => (Phase::Growing, None),
        [tip] => (Phase::Growing, Some(*tip)),
        [first, rest @ ..] => {
            let mut glb = Some(*first);
            for t in rest {
                glb = all.log_prefix(glb.as_ref(), Some(t)).expect("same author");
            }
            (Phase::Shrinking, glb)
        }
    }
}

/// Spanning tree over the correct replicas in random order, one edge from
/// each Byzantine replica to a random correct one, then random extras.
fn random_graph(scenario: &Scenario, extra: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let mut correct = scenario.correct_replicas();
    rng.shuffle(&mut correct);
    let mut edges = Vec::new();
    for i in 1..correct.len() {
        let j = rng.below(i);
        edges.push((correct[i], correct[j]));
    }
    for r in scenario.replicas.iter().filter(|r| !r.behavior.is_correct()) {
        edges.push((r.id, *rng.pick(&correct)));
    }
    let n = scenario.replicas.len();
    for _ in 0..extra {
        let a = rng.below(n);
        let b = rng.below(n);
        if a != b {
            edges.push((a, b));
        }
    }
    edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect()
}

/// Builds and runs a scenario with the given seed.
pub fn run(scenario: &Scenario, seed: u64) -> Result<SimReport, ScenarioError> {
    Ok(Sim::new(scenario, seed)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_correct() -> Scenario {
        Scenario::from_json(
            r#"{
                "name": "plain",
                "replicas": [
                    {"id": 0, "behavior": "correct"},
                    {"id": 1, "behavior": "correct"},
                    {"id": 2, "behavior": "correct"}
                ],
                "sync_graph": {"random": {"extra_edges": 1}},
                "authors": [{"name": "alice", "behavior": "correct", "home": [0], "messages": 10}],
                "rounds": 12
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn no_adversary_grows_to_the_last_message() {
        let report = run(&three_correct(), 1).unwrap();
        assert!(report.passed(), "{:?}", report.failures);
        let alice = report.author("alice").unwrap();
        assert_eq!(alice.phase, Phase::Growing);
        assert_eq!(alice.last_index, 10);
        assert!(report.fork_detections.is_empty());
    }

    #[test]
    fn same_seed_same_report() {
        let s = three_correct();
        assert_eq!(run(&s, 9).unwrap().to_json(), run(&s, 9).unwrap().to_json());
    }

    #[test]
    fn expected_state_of_a_fork() {
        let fx = crate::fixtures::Fixture::new();
        let mut r = Replica::new(0, ReplicaBehavior::Correct);
        for (id, m) in fx.store.iter() {
            r.offer(m.clone());
            if m.author == fx.sa.author() {
                r.append(id);
            }
        }
        let twin = Replica::new(1, ReplicaBehavior::Correct);
        let (phase, last) = expected_state(&[r, twin], &fx.sa.author());
        assert_eq!(phase, Phase::Shrinking);
        assert_eq!(last, Some(fx.a1));
    }
}
