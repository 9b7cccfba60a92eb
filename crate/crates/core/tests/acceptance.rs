//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness: the criteria execute one after another
//! so their timings are not distorted by other tests, and the lines are
//! printed even when everything passes.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use bftlog::fixtures::Fixture;
use bftlog::oracle::{self, enumerate::frontier_universe, Check};
use bftlog::sim::{self, Replica, ReplicaBehavior, Scenario, Sim};
use bftlog::{
    vectors, Digest, Frontier, FrontierError, InsertOutcome, Log, Message, MessageStore,
    OrderRule, Phase, Property, RejectReason,
};

const LOG_MSGS: usize = 6;
const GRAPH_MSGS: usize = 10;
const FRONTIER_AUTHORS: usize = 3;
const FRONTIER_MSGS: usize = 5;
const FRONTIER_CASES: usize = 10_000;
const SEEDS: u64 = 100;
const INVALID_OFFERS: usize = 100;

struct Outcome {
    id: u32,
    title: &'static str,
    ok: bool,
    elapsed: Duration,
    budget: Duration,
    notes: Vec<String>,
}

impl Outcome {
    fn line(&self) -> String {
        let pass = self.ok && self.elapsed <= self.budget;
        format!(
            "{} {:>2} {} ({:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }

    fn passed(&self) -> bool {
        self.ok && self.elapsed <= self.budget
    }
}

fn threads() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Checks whose name matches, all required to exist and pass.
fn require(checks: &[Check], names: &[&str], notes: &mut Vec<String>) -> bool {
    let mut ok = true;
    for name in names {
        match checks.iter().find(|c| c.name == *name) {
            Some(c) if c.passed() && c.cases > 0 => {}
            Some(c) => {
                notes.push(c.to_string());
                ok = false;
            }
            None => {
                notes.push(format!("missing check {name}"));
                ok = false;
            }
        }
    }
    ok
}

fn all_pass(checks: &[Check], filter: impl Fn(&str) -> bool, notes: &mut Vec<String>) -> bool {
    let mut seen = 0;
    for c in checks.iter().filter(|c| filter(&c.name)) {
        seen += 1;
        if !c.passed() {
            notes.push(c.to_string());
        }
    }
    seen > 0 && notes.is_empty()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"));
    Scenario::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Every single-property violation, built from the fixture graph. Each
/// entry is the broken state, the phase it claims, and the property that
/// must be reported.
fn broken_states(fx: &Fixture) -> Vec<(Log, Phase, Property)> {
    let a = fx.sa.author();
    let ghost = Digest::of(b"never stored");
    let forks = |ids: &[Digest]| ids.iter().copied().collect::<BTreeSet<_>>();
    let mut out = vec![
        (Log::shrinking(a, Some(fx.a1), forks(&[fx.a2, fx.a2p])), Phase::Growing, Property::CL1),
        (Log::growing(a, Some(ghost)), Phase::Growing, Property::CL2),
        (Log::growing(a, Some(fx.b1)), Phase::Growing, Property::CL3),
        (Log::growing(a, Some(fx.a2)), Phase::Shrinking, Property::FL1),
        (Log::shrinking(a, Some(ghost), forks(&[fx.a3, fx.a3p])), Phase::Shrinking, Property::FL2),
        (Log::shrinking(a, Some(fx.b1), forks(&[fx.a3, fx.a3p])), Phase::Shrinking, Property::FL3),
        (Log::shrinking(a, Some(fx.a1), forks(&[fx.a2, fx.a2p, ghost])), Phase::Shrinking, Property::FL4),
        (Log::shrinking(a, Some(fx.a1), forks(&[fx.a2, fx.a2p, fx.b2])), Phase::Shrinking, Property::FL5),
        (Log::shrinking(a, Some(fx.a1), forks(&[fx.a2])), Phase::Shrinking, Property::FL6),
        (Log::shrinking(a, Some(fx.a2), forks(&[fx.a2, fx.a2p])), Phase::Shrinking, Property::FL7),
    ];
    // Also break every valid enumerated state of author A in each way that
    // applies to it.
    for f in frontier_universe(&fx.store, &[a]) {
        let Some(log) = f.get(&a) else { continue };
        if log.is_growing() {
            out.push((Log::growing(a, Some(ghost)), Phase::Growing, Property::CL2));
            out.push((log.clone(), Phase::Shrinking, Property::FL1));
        } else {
            let mut extra = log.forks.clone();
            extra.insert(ghost);
            out.push((Log::shrinking(a, log.last, extra), Phase::Shrinking, Property::FL4));
            let mut foreign = log.forks.clone();
            foreign.insert(fx.b1);
            out.push((Log::shrinking(a, log.last, foreign), Phase::Shrinking, Property::FL5));
            out.push((log.clone(), Phase::Growing, Property::CL1));
            if let Some(one) = log.forks.iter().next() {
                out.push((
                    Log::shrinking(a, log.last, BTreeSet::from([*one])),
                    Phase::Shrinking,
                    Property::FL6,
                ));
            }
        }
    }
    out
}

fn validity_fuzz(notes: &mut Vec<String>) -> bool {
    let fx = Fixture::new();
    let start = Frontier::new();
    let mut ok = true;
    for (log, claimed, p) in broken_states(&fx) {
        let report = log.validate_claimed(claimed, &fx.store);
        if !report.violates(p) {
            notes.push(format!("{p:?} not reported, got {:?}", report.violated));
            ok = false;
        }
        // Only states whose fork set agrees with the claim can reach update.
        if claimed == log.phase() {
            match start.update(&fx.store, &log) {
                Err(FrontierError::InvalidLog { report, .. }) if report.violates(p) => {}
                other => {
                    notes.push(format!("update accepted a {p:?} violation: {other:?}"));
                    ok = false;
                }
            }
        }
    }
    ok
}

fn sim_seeds(name: &str, mut extra: impl FnMut(&Sim, &sim::SimReport) -> Option<String>) -> (bool, Vec<String>) {
    let s = scenario(name);
    let mut notes = Vec::new();
    for seed in 1..=SEEDS {
        let mut run = Sim::new(&s, seed).unwrap();
        let report = run.execute();
        if !report.passed() {
            notes.push(format!("seed {seed}: {}", report.failures.join("; ")));
        } else if let Some(problem) = extra(&run, &report) {
            notes.push(format!("seed {seed}: {problem}"));
        }
        if notes.len() >= 3 {
            break;
        }
    }
    (notes.is_empty(), notes)
}

fn correct_stores(run: &Sim) -> impl Iterator<Item = &Replica> {
    run.replicas.iter().filter(|r| r.is_correct())
}

fn check_author(report: &sim::SimReport, name: &str, phase: Phase, index: u32) -> Option<String> {
    let Some(a) = report.author(name) else {
        return Some(format!("{name} missing from the report"));
    };
    (a.phase != phase || a.last_index != index).then(|| {
        format!("{name}: {} at {} instead of {phase} at {index}", a.phase, a.last_index)
    })
}

fn flips_rejected(notes: &mut Vec<String>) -> bool {
    let fx = Fixture::new();
    let msgs: Vec<Message> = fx.messages().cloned().collect();
    let mut total = 0;
    for (i, m) in msgs.iter().enumerate() {
        let mut base = MessageStore::new();
        for p in &msgs[..i] {
            base.insert(p.clone());
        }
        for (what, bad) in vectors::bit_flips(m) {
            total += 1;
            let mut store = base.clone();
            let got = store.insert(bad);
            if got != InsertOutcome::Rejected(RejectReason::M5) {
                notes.push(format!("{} {what}: {got:?}", fx.name(&m.id())));
            }
        }
    }
    notes.is_empty() && total > 0
}

fn misbehavior_bound(notes: &mut Vec<String>) -> bool {
    let fx = Fixture::new();
    let c = fx.sc.author();
    let mut replicas: Vec<Replica> = (0..3)
        .map(|i| Replica::new(i, ReplicaBehavior::Correct))
        .collect();
    for r in &mut replicas {
        for m in fx.messages() {
            r.offer(m.clone());
        }
    }
    for i in 0..INVALID_OFFERS {
        // Correctly signed, but with two deps by author A.
        let bad = Message::create(&fx.sc, None, BTreeSet::from([fx.a1, fx.a2]), format!("x{i}")).unwrap();
        let mut forged = bad.clone();
        forged.payload.push(b'!');
        for r in &mut replicas {
            r.offer(bad.clone());
            r.offer(forged.clone());
        }
    }
    for r in &replicas {
        let kept = r.misbehavior.get(&c).map(|m| m.reason);
        if r.misbehavior.len() != 1 || kept != Some(RejectReason::M4) {
            notes.push(format!("replica {}: {} records", r.id, r.misbehavior.len()));
        }
    }
    notes.is_empty()
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let t = threads();

    let (log_checks, log_time) =
        timed(|| oracle::log_suite(LOG_MSGS, OrderRule::default(), t).into_checks());
    let (frontier_checks, frontier_time) = timed(|| {
        oracle::frontier_suite(
            FRONTIER_AUTHORS,
            FRONTIER_MSGS,
            FRONTIER_CASES,
            1,
            OrderRule::default(),
            t,
        )
        .into_checks()
    });
    let (graph_checks, graph_time) = timed(|| oracle::graph_suite(GRAPH_MSGS, 1, t).into_checks());
    let lattice: Vec<Check> = log_checks.iter().chain(&frontier_checks).cloned().collect();

    let mut results = Vec::new();

    let mut notes = Vec::new();
    let ok = require(
        &lattice,
        &[
            "log.join.commutative",
            "log.join.associative",
            "log.join.idempotent",
            "log.join.least_vs_brute_force",
            "frontier.join.commutative",
            "frontier.join.associative",
            "frontier.join.idempotent",
            "frontier.join.least_vs_brute_force",
        ],
        &mut notes,
    ) && frontier_checks
        .iter()
        .find(|c| c.name == "frontier.join.commutative")
        .is_some_and(|c| c.cases >= FRONTIER_CASES as u64);
    results.push(Outcome {
        id: 1,
        title: "join is a semilattice least upper bound",
        ok,
        elapsed: log_time + frontier_time,
        budget: secs(60),
        notes,
    });

    let mut notes = Vec::new();
    let mut names = Vec::new();
    for rel in ["graph.leq_m", "graph.leq_log", "log.leq", "frontier.leq"] {
        for law in ["reflexive", "transitive", "antisymmetric"] {
            names.push(format!("{rel}.{law}"));
        }
    }
    let every: Vec<Check> = lattice.iter().chain(&graph_checks).cloned().collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let ok = require(&every, &names, &mut notes);
    results.push(Outcome {
        id: 2,
        title: "all four orders are partial orders",
        ok,
        elapsed: log_time + frontier_time + graph_time,
        budget: secs(30),
        notes,
    });

    let mut notes = Vec::new();
    let ok = require(
        &lattice,
        &[
            "log.append.monotone",
            "log.join.upper_bound",
            "frontier.update.monotone",
            "frontier.join.upper_bound",
        ],
        &mut notes,
    );
    results.push(Outcome {
        id: 3,
        title: "append, update and join only move up",
        ok,
        elapsed: log_time + frontier_time,
        budget: secs(30),
        notes,
    });

    let mut notes = Vec::new();
    let (fuzz_ok, fuzz_time) = timed(|| validity_fuzz(&mut notes));
    let ok = require(
        &lattice,
        &[
            "log.initialize_valid",
            "log.enumerated_states_valid",
            "log.append.valid",
            "log.join.valid",
            "frontier.join.valid",
            "frontier.update.valid",
        ],
        &mut notes,
    ) && fuzz_ok;
    results.push(Outcome {
        id: 4,
        title: "operations keep states valid; broken states are rejected by label",
        ok,
        elapsed: log_time + frontier_time + fuzz_time,
        budget: secs(30),
        notes,
    });

    let mut notes = Vec::new();
    let ok = require(
        &graph_checks,
        &["graph.log_prefix_vs_max_common_history", "graph.fork_proof_vs_literal_filter"],
        &mut notes,
    ) && all_pass(&graph_checks, |n| n.starts_with("graph."), &mut notes);
    results.push(Outcome {
        id: 5,
        title: "graph queries match brute force on all stores up to 10 messages",
        ok,
        elapsed: graph_time,
        budget: secs(30),
        notes,
    });

    let ((ok, notes), elapsed) = timed(|| {
        sim_seeds("fork_basic", |_, r| {
            check_author(r, "mallory", Phase::Shrinking, 3)
                .or_else(|| check_author(r, "alice", Phase::Growing, 6))
                .or_else(|| (!r.converged).then(|| "snapshots differ".to_string()))
        })
    });
    results.push(Outcome {
        id: 6,
        title: "correct replicas converge; forker shrinks, correct author grows",
        ok,
        elapsed,
        budget: secs(120),
        notes,
    });

    let ((ok, notes), elapsed) = timed(|| {
        sim_seeds("fork_death", |run, r| {
            if let Some(w) = r.windows.iter().find(|w| w.post_propagation_advances != 0) {
                return Some(format!("{} advanced {} times", w.author, w.post_propagation_advances));
            }
            let forker = run.authors.iter().find(|a| a.is_forking())?.author;
            // Late messages reach the forker's homes but no frontier names
            // them, so they spread no further.
            let holders = correct_stores(run)
                .filter(|rep| {
                    rep.store
                        .by_author(&forker)
                        .any(|d| rep.store.height(Some(d)).unwrap() > 6)
                })
                .count();
            if holders == 0 {
                return Some("no correct replica received a late message".into());
            }
            check_author(r, "mallory", Phase::Shrinking, 3)
        })
    });
    results.push(Outcome {
        id: 7,
        title: "a forked log is never extended after its proof spreads",
        ok,
        elapsed,
        budget: secs(60),
        notes,
    });

    let ((ok, notes), elapsed) = timed(|| {
        sim_seeds("deeper_fork", |_, r| check_author(r, "mallory", Phase::Shrinking, 1))
    });
    results.push(Outcome {
        id: 8,
        title: "a deeper fork moves every last back to it",
        ok,
        elapsed,
        budget: secs(30),
        notes,
    });

    let mut notes = Vec::new();
    let (ok, elapsed) = timed(|| {
        let golden = std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_vectors.txt"),
        )
        .unwrap();
        let reproduced = vectors::render() == golden;
        if !reproduced {
            notes.push("rendered vectors differ from the committed file".into());
        }
        if let Err(e) = vectors::check(&golden) {
            notes.push(e.to_string());
        }
        let flips = flips_rejected(&mut notes);
        reproduced && flips && notes.is_empty()
    });
    results.push(Outcome {
        id: 9,
        title: "golden vectors reproduce; every bit flip is rejected as M5",
        ok,
        elapsed,
        budget: secs(10),
        notes,
    });

    let mut notes = Vec::new();
    let (ok, elapsed) = timed(|| misbehavior_bound(&mut notes));
    results.push(Outcome {
        id: 10,
        title: "one misbehavior record per author and replica",
        ok,
        elapsed,
        budget: secs(10),
        notes,
    });

    let mut failed = Vec::new();
    println!();
    for r in &results {
        println!("{}", r.line());
        for n in &r.notes {
            println!("     {n}");
        }
        if !r.passed() {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
