use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bftlog::fixtures::Fixture;
use bftlog::store::encode_records;
use bftlog::Message;

fn bftlog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bftlog"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn core(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_is_deterministic() {
    let scenario = core("scenarios/fork_basic.json");
    let (a, b) = (tmp("det_a.json"), tmp("det_b.json"));
    for out in [&a, &b] {
        let o = bftlog(&["run", "--scenario", &scenario, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
}

#[test]
fn vectors_match_committed_file() {
    let out = tmp("vectors.txt");
    let o = bftlog(&["vectors", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let committed = std::fs::read_to_string(core("tests/data/golden_vectors.txt")).unwrap();
    assert_eq!(std::fs::read_to_string(out).unwrap(), committed);
}

#[test]
fn validate_accepts_fixture_store_and_names_bad_record() {
    let fx = Fixture::new();
    let good = tmp("good.store");
    std::fs::write(&good, encode_records(fx.messages())).unwrap();
    let o = bftlog(&["validate", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // Two deps by the same author.
    let bad = Message::create(&fx.sc, None, BTreeSet::from([fx.a1, fx.a2]), "x").unwrap();
    let mut msgs: Vec<Message> = fx.messages().cloned().collect();
    msgs.push(bad);
    let path = tmp("bad.store");
    std::fs::write(&path, encode_records(&msgs)).unwrap();
    let o = bftlog(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("M4"), "{}", stdout(&o));

    let junk = tmp("junk.store");
    std::fs::write(&junk, [0, 0, 0, 9, 1]).unwrap();
    assert_eq!(bftlog(&["validate", junk.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn too_few_correct_replicas_is_a_config_error() {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/one_correct.json");
    let out = tmp("one_correct_report.json");
    let o = bftlog(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("correct replicas"));
}

#[test]
fn oracle_small_bounds_pass() {
    for (msgs, authors) in [("0", "1"), ("6", "1")] {
        let o = bftlog(&["oracle", "--max-msgs", msgs, "--max-authors", authors, "--cases", "300"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn oracle_rejects_large_bounds() {
    assert_eq!(bftlog(&["oracle", "--max-msgs", "11"]).status.code(), Some(2));
    assert_eq!(bftlog(&["oracle", "--max-authors", "4"]).status.code(), Some(2));
}

#[test]
fn oracle_catches_broken_order_rule() {
    let out = tmp("mutant.json");
    let o = bftlog(&[
        "oracle", "--max-msgs", "4", "--cases", "300", "--order-rule", "always-below",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL log.join.least_vs_brute_force"), "{}", stdout(&o));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert!(json["checks"].is_array());
}
