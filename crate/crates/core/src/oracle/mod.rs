//! Exhaustive and randomized checkers for the laws the CRDTs must obey.
//!
//! Three suites:
//! - graph: every query of [`crate::graph`] against [`brute::RawGraph`] on
//!   every forest shape of a given size, plus partial-order laws
//! - log: partial order, least upper bound, monotonicity and validity
//!   preservation over every valid log state of every small forest
//! - frontier: the same laws on seeded random frontiers, with the least
//!   upper bound found by scanning every valid frontier of the store
//!
//! Orders are compared under a configurable [`OrderRule`] so the suites can
//! be pointed at a broken rule and shown to fail.

pub mod brute;
pub mod enumerate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::frontier::Frontier;
use crate::identity::{Author, AuthorSecret, Digest};
use crate::log::{Log, OrderRule};
use crate::message::Message;
use crate::rng::SimRng;
use crate::store::MessageStore;
use brute::RawGraph;
use enumerate::{
    forest_messages, forest_shapes, frontier_universe, log_states, store_of, visit_forests,
    MessageCache,
};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {} ({} cases, {} failures)",
            self.name, self.cases, self.failures
        )?;
        if let Some(ex) = &self.first_failure {
            write!(f, ": {ex}")?;
        }
        Ok(())
    }
}

/// Named pass/fail counters, mergeable across worker threads.
#[derive(Clone, Debug, Default)]
pub struct Tally {
    checks: BTreeMap<String, Check>,
}

impl Tally {
    pub fn check(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        if !self.checks.contains_key(name) {
            let fresh = Check {
                name: name.to_string(),
                ..Check::default()
            };
            self.checks.insert(name.to_string(), fresh);
        }
        let c = self.checks.get_mut(name).expect("just inserted");
        c.cases += 1;
        if !ok {
            c.failures += 1;
            if c.first_failure.is_none() {
                c.first_failure = Some(detail());
            }
        }
    }

    pub fn merge(&mut self, other: Tally) {
        for (name, c) in other.checks {
            let mine = self.checks.entry(name).or_insert_with(|| Check {
                name: c.name.clone(),
                ..Check::default()
            });
            mine.cases += c.cases;
            mine.failures += c.failures;
            if mine.first_failure.is_none() {
                mine.first_failure = c.first_failure;
            }
        }
    }

    pub fn into_checks(self) -> Vec<Check> {
        self.checks.into_values().collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    /// Messages per enumerated store.
    pub max_msgs: usize,
    /// Authors in graph stores and random frontiers.
    pub max_authors: usize,
    pub rule: OrderRule,
    /// Random frontier cases; 0 skips the frontier suite.
    pub frontier_cases: usize,
    /// Messages per author in random frontier stores.
    pub frontier_msgs: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_msgs: 6,
            max_authors: 1,
            rule: OrderRule::default(),
            frontier_cases: 10_000,
            frontier_msgs: 5,
            seed: 1,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Largest store the log suite enumerates. Its cost grows about sevenfold
/// per message, so larger `max_msgs` only widen the graph suite.
pub const LOG_SUITE_MAX: usize = 7;

/// Runs all three suites.
pub fn run(config: &OracleConfig) -> OracleReport {
    let mut tally = Tally::default();
    tally.merge(graph_suite(config.max_msgs, config.max_authors, config.threads));
    let log_msgs = config.max_msgs.min(LOG_SUITE_MAX);
    tally.merge(log_suite(log_msgs, config.rule, config.threads));
    if config.frontier_cases > 0 {
        tally.merge(frontier_suite(
            config.max_authors,
            config.frontier_msgs,
            config.frontier_cases,
            config.seed,
            config.rule,
            config.threads,
        ));
    }
    OracleReport {
        checks: tally.into_checks(),
    }
}

fn parallel<W: Sync, F>(work: &[W], threads: usize, f: F) -> Tally
where
    F: Fn(&W, &mut Tally, &mut MessageCache) + Sync,
{
    let threads = threads.clamp(1, work.len().max(1));
    let chunk = work.len().div_ceil(threads).max(1);
    let mut total = Tally::default();
    std::thread::scope(|s| {
        let handles: Vec<_> = work
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || {
                    let mut tally = Tally::default();
                    let mut cache = MessageCache::default();
                    for w in part {
                        f(w, &mut tally, &mut cache);
                    }
                    tally
                })
            })
            .collect();
        for h in handles {
            total.merge(h.join().expect("oracle worker panicked"));
        }
    });
    total
}

fn secret(i: usize) -> AuthorSecret {
    AuthorSecret::derive(format!("oracle/author-{i}").as_bytes())
}

fn short(d: Option<&Digest>) -> String {
    d.map_or_else(|| "bottom".into(), |d| d.to_hex()[..8].to_string())
}

/// Adds a two-message chain for every other author to the first author's
/// forest, each message depending on some message of the first author.
fn add_other_authors(
    shape: &[Option<usize>],
    first: &[Message],
    store: &MessageStore,
    authors: usize,
    cache: &mut MessageCache,
) -> (Vec<Message>, MessageStore) {
    let mut msgs = first.to_vec();
    let mut store = store.clone();
    // Any deterministic function of the shape spreads the deps around.
    let salt: usize = shape
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) * p.map_or(0, |p| p + 1))
        .sum();
    for a in 1..authors {
        let s = secret(a);
        let mut prev = None;
        for k in 0..2 {
            let deps = if first.is_empty() {
                BTreeSet::new()
            } else {
                BTreeSet::from([first[(salt * 7 + a * 3 + k * 5) % first.len()].id()])
            };
            let m = cache.message(&s, prev, deps, format!("x{k}").into_bytes());
            prev = Some(m.id());
            assert!(store.insert(m.clone()).is_stored(), "graph message rejected");
            msgs.push(m);
        }
    }
    (msgs, store)
}

/// Graph queries against brute force on every forest shape of
/// `max_msgs` messages in total.
pub fn graph_suite(max_msgs: usize, max_authors: usize, threads: usize) -> Tally {
    let authors = max_authors.max(1);
    let extra = 2 * (authors - 1);
    let first_size = max_msgs.saturating_sub(extra);
    // Short prefixes are the work items; each worker extends its own.
    let prefixes = forest_shapes(first_size.min(4));
    let s0 = secret(0);
    parallel(&prefixes, threads, |prefix, t, cache| {
        let mut inner = MessageCache::default();
        visit_forests(&s0, prefix, first_size, cache, &mut |shape, first, store| {
            if authors == 1 {
                check_graph(store, &RawGraph::new(first), t);
            } else {
                let (msgs, store) = add_other_authors(shape, first, store, authors, &mut inner);
                check_graph(&store, &RawGraph::new(&msgs), t);
            }
        });
    })
}

fn check_graph(store: &MessageStore, raw: &RawGraph, t: &mut Tally) {
    let ids: Vec<Digest> = raw.ids().copied().collect();
    let positions: Vec<Option<Digest>> =
        std::iter::once(None).chain(ids.iter().copied().map(Some)).collect();
    let n = positions.len();
    let mut leq_m = vec![vec![false; n]; n];
    let mut leq_log = vec![vec![false; n]; n];

    for (i, x) in positions.iter().enumerate() {
        let x = x.as_ref();
        t.check(
            "graph.causal_history_vs_dfs",
            store.causal_history(x).ok() == Some(raw.history(x)),
            || format!("H({})", short(x)),
        );
        t.check(
            "graph.log_history_vs_walk",
            store.log_history(x).ok() == Some(raw.log_history(x)),
            || format!("H_log({})", short(x)),
        );
        if let Some(d) = x {
            t.check(
                "graph.acyclic",
                !store.happens_before(Some(d), d).unwrap_or(true),
                || format!("{} happens before itself", short(x)),
            );
        }
        for (j, y) in positions.iter().enumerate() {
            let y = y.as_ref();
            let m = store.leq_m(x, y).ok();
            let l = store.leq_log(x, y).ok();
            t.check("graph.leq_m_vs_dfs", m == Some(raw.leq_m(x, y)), || {
                format!("leq_m({}, {})", short(x), short(y))
            });
            t.check("graph.leq_log_vs_walk", l == Some(raw.leq_log(x, y)), || {
                format!("leq_log({}, {})", short(x), short(y))
            });
            leq_m[i][j] = m.unwrap_or(false);
            leq_log[i][j] = l.unwrap_or(false);

            let same = match (x, y) {
                (Some(a), Some(b)) => raw.author(a) == raw.author(b),
                _ => true,
            };
            if !same {
                t.check(
                    "graph.cross_author_prefix_errors",
                    store.log_prefix(x, y).is_err(),
                    || "log_prefix accepted two authors".into(),
                );
                continue;
            }
            let prefix = raw.log_prefix(x, y);
            t.check(
                "graph.log_prefix_vs_max_common_history",
                store.log_prefix(x, y).ok() == Some(prefix),
                || format!("log_prefix({}, {})", short(x), short(y)),
            );
            let proof = store.fork_proof(x, y);
            t.check(
                "graph.fork_proof_vs_literal_filter",
                proof.as_ref().ok() == Some(&raw.fork_proof(x, y)),
                || format!("fork_proof({}, {})", short(x), short(y)),
            );
            t.check(
                "graph.log_range_vs_difference",
                store.log_range(x, y).ok() == Some(raw.range(x, y)),
                || format!("]{}, {}]", short(x), short(y)),
            );
            if let Ok(proof) = proof {
                let concurrent = !raw.leq_log(x, y) && !raw.leq_log(y, x);
                let shape_ok = proof
                    .iter()
                    .all(|m| store.get(m).map(|m| m.prev) == Some(prefix))
                    && (!concurrent || proof.len() >= 2);
                t.check("graph.fork_proof_shape", shape_ok, || {
                    format!("fork_proof({}, {}) = {proof:?}", short(x), short(y))
                });
            }
        }
    }

    for (name, rel) in [("graph.leq_m", &leq_m), ("graph.leq_log", &leq_log)] {
        check_partial_order(name, rel, t, |i| short(positions[i].as_ref()), |i, j| i == j);
    }
}

/// Reflexivity, antisymmetry (up to `same`) and transitivity of a relation
/// given as a boolean matrix.
fn check_partial_order(
    name: &str,
    rel: &[Vec<bool>],
    t: &mut Tally,
    label: impl Fn(usize) -> String,
    same: impl Fn(usize, usize) -> bool,
) {
    let n = rel.len();
    let (r, a, tr) = (
        format!("{name}.reflexive"),
        format!("{name}.antisymmetric"),
        format!("{name}.transitive"),
    );
    for i in 0..n {
        t.check(&r, rel[i][i], || label(i));
        for j in 0..n {
            t.check(&a, !(rel[i][j] && rel[j][i]) || same(i, j), || {
                format!("{} and {}", label(i), label(j))
            });
            if !rel[i][j] {
                continue;
            }
            for k in 0..n {
                if rel[j][k] && !rel[i][k] {
                    t.check(&tr, false, || {
                        format!("{} <= {} <= {}", label(i), label(j), label(k))
                    });
                } else {
                    t.check(&tr, true, String::new);
                }
            }
        }
    }
}

/// Log CRDT laws over every valid state of every forest of up to `max_msgs`
/// messages.
pub fn log_suite(max_msgs: usize, rule: OrderRule, threads: usize) -> Tally {
    let shapes: Vec<Vec<Option<usize>>> = (0..=max_msgs).flat_map(forest_shapes).collect();
    parallel(&shapes, threads, |shape, t, cache| {
        let s = secret(0);
        let store = store_of(forest_messages(&s, shape, cache));
        check_log_states(&store, &s.author(), rule, t);
    })
}

fn check_log_states(store: &MessageStore, author: &Author, rule: OrderRule, t: &mut Tally) {
    let states = log_states(store, author);
    let index: HashMap<&Log, usize> = states.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let n = states.len();
    let leq = |a: &Log, b: &Log| a.leq_with(b, store, rule).unwrap_or(false);
    let rel: Vec<Vec<bool>> = states
        .iter()
        .map(|a| states.iter().map(|b| leq(a, b)).collect())
        .collect();

    for l in &states {
        t.check("log.enumerated_states_valid", l.validate(store).valid(), || {
            format!("{l:?}")
        });
    }
    let init = Log::new(*author);
    t.check("log.initialize_valid", init.validate(store).valid(), || {
        format!("{init:?}")
    });
    for l in &states {
        t.check("log.initialize_is_bottom", leq(&init, l), || format!("{l:?}"));
    }

    check_partial_order("log.leq", &rel, t, |i| format!("{:?}", states[i]), |i, j| {
        states[i].equivalent(&states[j])
    });

    // join table, as indices into `states`
    let mut joins = vec![vec![usize::MAX; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&states[i], &states[j]);
            let Ok(jn) = a.join(b, store) else {
                t.check("log.join.defined", false, || format!("{a:?} ⊔ {b:?}"));
                continue;
            };
            t.check("log.join.valid", jn.validate(store).valid(), || {
                format!("{a:?} ⊔ {b:?} = {jn:?}")
            });
            let Some(&k) = index.get(&jn) else {
                t.check("log.join.enumerated", false, || format!("{jn:?}"));
                continue;
            };
            joins[i][j] = k;
            t.check("log.join.upper_bound", rel[i][k] && rel[j][k], || {
                format!("{a:?} ⊔ {b:?} = {jn:?}")
            });
            let least = (0..n).all(|u| !(rel[i][u] && rel[j][u]) || rel[k][u]);
            t.check("log.join.least_vs_brute_force", least, || {
                let better = (0..n)
                    .find(|&u| rel[i][u] && rel[j][u] && !rel[k][u])
                    .map(|u| format!("{:?}", states[u]));
                format!("{a:?} ⊔ {b:?} = {jn:?}, smaller upper bound {better:?}")
            });
            if i == j {
                t.check("log.join.idempotent", jn == *a, || format!("{a:?}"));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if joins[i][j] == usize::MAX || joins[j][i] == usize::MAX {
                continue;
            }
            t.check("log.join.commutative", joins[i][j] == joins[j][i], || {
                format!("{:?} / {:?}", states[i], states[j])
            });
            for k in 0..n {
                let (ij, jk) = (joins[i][j], joins[j][k]);
                if ij == usize::MAX || jk == usize::MAX {
                    continue;
                }
                let (l, r) = (joins[ij][k], joins[i][jk]);
                if l == usize::MAX || r == usize::MAX {
                    continue;
                }
                t.check(
                    "log.join.associative",
                    states[l].equivalent(&states[r]),
                    || format!("{:?} {:?} {:?}", states[i], states[j], states[k]),
                );
            }
        }
    }

    let own: Vec<Digest> = store.by_author(author).copied().collect();
    for l in &states {
        for m in &own {
            let Ok(next) = l.append(store, m) else {
                t.check("log.append.defined", false, || format!("{l:?} + {m:?}"));
                continue;
            };
            t.check("log.append.valid", next.validate(store).valid(), || {
                format!("{l:?} + {m:?} = {next:?}")
            });
            t.check("log.append.monotone", leq(l, &next), || {
                format!("{l:?} + {m:?} = {next:?}")
            });
            if !l.is_growing() {
                t.check("log.append.phase_trapdoor", !next.is_growing(), || {
                    format!("{l:?} + {m:?} = {next:?}")
                });
                t.check(
                    "log.append.shrinks_backwards",
                    store
                        .leq_log(next.last.as_ref(), l.last.as_ref())
                        .unwrap_or(false),
                    || format!("{l:?} + {m:?} = {next:?}"),
                );
            }
        }
    }
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            let k = joins[i][j];
            if k != usize::MAX && (!a.is_growing() || !b.is_growing()) {
                t.check("log.join.phase_trapdoor", !states[k].is_growing(), || {
                    format!("{a:?} ⊔ {b:?}")
                });
            }
        }
    }
}

fn random_forest(rng: &mut SimRng, max: usize) -> Vec<Option<usize>> {
    let n = rng.below(max + 1);
    (0..n)
        .map(|i| {
            // Mostly chains, with the occasional fork or extra root.
            if i == 0 || rng.chance(0.1) {
                None
            } else if rng.chance(0.6) {
                Some(i - 1)
            } else {
                Some(rng.below(i))
            }
        })
        .collect()
}

/// Frontier CRDT laws on `cases` seeded random frontier triples.
pub fn frontier_suite(
    max_authors: usize,
    msgs_per_author: usize,
    cases: usize,
    seed: u64,
    rule: OrderRule,
    threads: usize,
) -> Tally {
    const CASES_PER_STORE: usize = 50;
    let stores = cases.div_ceil(CASES_PER_STORE);
    let work: Vec<(u64, usize)> = (0..stores)
        .map(|i| {
            let left = cases - i * CASES_PER_STORE;
            (seed.wrapping_add(i as u64), left.min(CASES_PER_STORE))
        })
        .collect();
    parallel(&work, threads, |&(store_seed, n_cases), t, cache| {
        let mut rng = SimRng::new(store_seed);
        let n_authors = 1 + rng.below(max_authors.max(1));
        let mut msgs = Vec::new();
        let mut authors = Vec::new();
        for a in 0..n_authors {
            let s = secret(a);
            authors.push(s.author());
            let shape = random_forest(&mut rng, msgs_per_author);
            msgs.extend(forest_messages(&s, &shape, cache));
        }
        let store = store_of(msgs);
        let universe = frontier_universe(&store, &authors);
        for _ in 0..n_cases {
            let a = rng.pick(&universe);
            let b = rng.pick(&universe);
            let c = rng.pick(&universe);
            check_frontier_case(&store, &universe, [a, b, c], rule, &mut rng, t);
        }
    })
}

fn check_frontier_case(
    store: &MessageStore,
    universe: &[Frontier],
    [a, b, c]: [&Frontier; 3],
    rule: OrderRule,
    rng: &mut SimRng,
    t: &mut Tally,
) {
    let leq = |x: &Frontier, y: &Frontier| x.leq_with(y, store, rule).unwrap_or(false);
    let join = |x: &Frontier, y: &Frontier| x.join(y, store).expect("same-author joins");

    t.check("frontier.leq.reflexive", leq(a, a), || a.snapshot());
    t.check(
        "frontier.leq.antisymmetric",
        !(leq(a, b) && leq(b, a)) || a.equivalent(b),
        || format!("{}/{}", a.snapshot(), b.snapshot()),
    );
    t.check(
        "frontier.leq.transitive",
        !(leq(a, b) && leq(b, c)) || leq(a, c),
        || format!("{}/{}/{}", a.snapshot(), b.snapshot(), c.snapshot()),
    );

    let ab = join(a, b);
    t.check("frontier.join.valid", ab.is_valid(store), || ab.snapshot());
    t.check("frontier.join.commutative", ab == join(b, a), || {
        format!("{}/{}", a.snapshot(), b.snapshot())
    });
    t.check("frontier.join.idempotent", join(a, a) == *a, || a.snapshot());
    t.check(
        "frontier.join.associative",
        join(&ab, c).equivalent(&join(a, &join(b, c))),
        || format!("{}/{}/{}", a.snapshot(), b.snapshot(), c.snapshot()),
    );
    t.check("frontier.join.upper_bound", leq(a, &ab) && leq(b, &ab), || {
        format!("{}/{}", a.snapshot(), b.snapshot())
    });
    let least = universe
        .iter()
        .all(|u| !(leq(a, u) && leq(b, u)) || leq(&ab, u));
    t.check("frontier.join.least_vs_brute_force", least, || {
        format!("{}/{}", a.snapshot(), b.snapshot())
    });

    // update with a random valid log of a random author
    let authors: Vec<Author> = store.authors().copied().collect();
    if authors.is_empty() {
        return;
    }
    let author = *rng.pick(&authors);
    let states = log_states(store, &author);
    let l = rng.pick(&states);
    match a.update(store, l) {
        Ok(up) => {
            let single: Frontier = [l.clone()].into_iter().collect();
            t.check("frontier.update.valid", up.is_valid(store), || up.snapshot());
            t.check(
                "frontier.update.monotone",
                leq(a, &up) && leq(&single, &up),
                || format!("{} + {l:?}", a.snapshot()),
            );
            t.check("frontier.update.matches_join", up == join(a, &single), || {
                format!("{} + {l:?}", a.snapshot())
            });
        }
        Err(e) => t.check("frontier.update.accepts_valid", false, || e.to_string()),
    }
}
