//! `bftlog`: run scenarios, regenerate golden vectors, run the oracle
//! suites and validate store files.
//!
//! Exit codes: 0 pass, 1 a check failed, 2 bad input or configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bftlog::oracle::{self, OracleConfig};
use bftlog::sim::{self, Scenario};
use bftlog::store::{decode_records, MessageStore, ReplayError};
use bftlog::{vectors, InsertOutcome, OrderRule};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bftlog", version, about = "Two-phase BFT log CRDT harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the golden vector file.
    Vectors {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the exhaustive and randomized law checkers.
    Oracle {
        #[arg(long, default_value_t = 6)]
        max_msgs: usize,
        #[arg(long, default_value_t = 1)]
        max_authors: usize,
        /// Random frontier cases.
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the per-check results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Rule::ComparableLasts, hide = true)]
        order_rule: Rule,
    },
    /// Replay a store file and report the first rejected record.
    Validate {
        store: PathBuf,
        /// Also reject same-author dependencies that go backwards (M7).
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    ComparableLasts,
    AlwaysBelow,
    Never,
}

impl From<Rule> for OrderRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::ComparableLasts => OrderRule::ComparableLasts,
            Rule::AlwaysBelow => OrderRule::AlwaysBelow,
            Rule::Never => OrderRule::Never,
        }
    }
}

/// Input or configuration problem: exit code 2.
struct Usage(String);

type Outcome = Result<bool, Usage>;

fn read(path: &Path) -> Result<Vec<u8>, Usage> {
    fs::read(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Usage> {
    fs::write(path, bytes).map_err(|e| Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path) -> Outcome {
    let text = String::from_utf8(read(scenario)?)
        .map_err(|_| Usage(format!("{} is not UTF-8", scenario.display())))?;
    let s = Scenario::from_json(&text).map_err(|e| Usage(e.to_string()))?;
    let seed = seed.unwrap_or(s.seed);
    let report = sim::run(&s, seed).map_err(|e| Usage(e.to_string()))?;
    write(out, report.to_json().as_bytes())?;
    println!(
        "{} seed {seed}: converged={} rounds_to_convergence={} failures={}",
        if s.name.is_empty() { "scenario" } else { &s.name },
        report.converged,
        report.rounds_to_convergence,
        report.failures.len()
    );
    for f in &report.failures {
        println!("  {f}");
    }
    Ok(report.passed())
}

fn cmd_vectors(out: &Path) -> Outcome {
    let text = vectors::render();
    let n = vectors::check(&text).map_err(|e| Usage(e.to_string()))?;
    write(out, text.as_bytes())?;
    println!("wrote {n} vectors to {}", out.display());
    Ok(true)
}

fn cmd_oracle(config: OracleConfig, out: Option<&Path>) -> Outcome {
    if config.max_msgs > 10 || !(1..=3).contains(&config.max_authors) {
        return Err(Usage(
            "bounds are at most 10 messages and 1 to 3 authors".into(),
        ));
    }
    let report = oracle::run(&config);
    for c in &report.checks {
        println!("{c}");
    }
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write(path, json.as_bytes())?;
    }
    Ok(report.passed())
}

fn cmd_validate(path: &Path, strict: bool) -> Outcome {
    let bytes = read(path)?;
    let records = decode_records(&bytes).map_err(|e| Usage(e.to_string()))?;
    let mut store = if strict {
        MessageStore::strict()
    } else {
        MessageStore::new()
    };
    for (i, m) in records.into_iter().enumerate() {
        if let InsertOutcome::Rejected(reason) = store.insert(m) {
            let err = ReplayError::Rejected { record: i, reason };
            println!("invalid: {err}");
            println!("reason: {}", reason.label());
            return Ok(false);
        }
    }
    println!("ok: {} messages", store.len());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { scenario, seed, out } => cmd_run(scenario, *seed, out),
        Command::Vectors { out } => cmd_vectors(out),
        Command::Oracle {
            max_msgs,
            max_authors,
            cases,
            seed,
            out,
            order_rule,
        } => cmd_oracle(
            OracleConfig {
                max_msgs: *max_msgs,
                max_authors: *max_authors,
                rule: (*order_rule).into(),
                frontier_cases: *cases,
                frontier_msgs: (*max_msgs).min(5),
                seed: *seed,
                ..OracleConfig::default()
            },
            out.as_deref(),
        ),
        Command::Validate { store, strict } => cmd_validate(store, *strict),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
