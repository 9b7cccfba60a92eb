//! Golden vectors: identifiers and signatures of the fixture messages.
//!
//! One line per message, space separated:
//! `name msg_id author prev deps payload signature`, all hex, with `-` for
//! an absent prev, empty deps or empty payload, and deps comma-joined in
//! ascending order.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::fixtures::Fixture;
use crate::identity::{Author, Digest, Signature};
use crate::message::Message;

const HEADER: &str = "# name msg_id author prev deps payload signature";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VectorError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: {name} has id {found}, listed {listed}")]
    IdMismatch {
        line: usize,
        name: String,
        listed: Digest,
        found: Digest,
    },
    #[error("line {line}: signature of {name} does not verify")]
    BadSignature { line: usize, name: String },
}

/// Renders the golden vector file for the standard fixture.
pub fn render() -> String {
    let fx = Fixture::new();
    let mut out = String::from(HEADER);
    out.push('\n');
    for m in fx.messages() {
        out.push_str(&line(fx.name(&m.id()), m));
        out.push('\n');
    }
    out
}

fn dash(s: String) -> String {
    if s.is_empty() {
        "-".into()
    } else {
        s
    }
}

fn line(name: &str, m: &Message) -> String {
    let deps: Vec<String> = m.deps.iter().map(Digest::to_hex).collect();
    [
        name.to_string(),
        m.id().to_hex(),
        m.author.to_hex(),
        dash(m.prev.map(|p| p.to_hex()).unwrap_or_default()),
        dash(deps.join(",")),
        dash(hex::encode(&m.payload)),
        m.signature.to_hex(),
    ]
    .join(" ")
}

/// One parsed vector line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vector {
    pub line: usize,
    pub name: String,
    pub id: Digest,
    pub message: Message,
}

pub fn parse(text: &str) -> Result<Vec<Vector>, VectorError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let bad = |reason: String| VectorError::Malformed { line, reason };
        let f: Vec<&str> = raw.split_whitespace().collect();
        let [name, id, author, prev, deps, payload, sig] = f[..] else {
            return Err(bad(format!("expected 7 fields, got {}", f.len())));
        };
        let hexed = |e: crate::IdentityError| bad(e.to_string());
        let id = Digest::from_hex(id).map_err(hexed)?;
        let author = Author::from_hex(author).map_err(hexed)?;
        let prev = match prev {
            "-" => None,
            p => Some(Digest::from_hex(p).map_err(hexed)?),
        };
        let deps = match deps {
            "-" => BTreeSet::new(),
            d => d
                .split(',')
                .map(Digest::from_hex)
                .collect::<Result<_, _>>()
                .map_err(hexed)?,
        };
        let payload = match payload {
            "-" => Vec::new(),
            p => hex::decode(p).map_err(|e| bad(e.to_string()))?,
        };
        let signature = Signature::from_hex(sig).map_err(hexed)?;
        out.push(Vector {
            line,
            name: name.to_string(),
            id,
            message: Message {
                author,
                prev,
                deps,
                payload,
                signature,
            },
        });
    }
    Ok(out)
}

/// Recomputes every listed id and verifies every signature.
pub fn check(text: &str) -> Result<usize, VectorError> {
    let parsed = parse(text)?;
    for v in &parsed {
        let found = v.message.id();
        if found != v.id {
            return Err(VectorError::IdMismatch {
                line: v.line,
                name: v.name.clone(),
                listed: v.id,
                found,
            });
        }
        if !v.message.verify() {
            return Err(VectorError::BadSignature {
                line: v.line,
                name: v.name.clone(),
            });
        }
    }
    Ok(parsed.len())
}

/// Every copy of `m` with exactly one bit flipped in the author, prev,
/// deps, payload or signature, labelled by field and bit index.
pub fn bit_flips(m: &Message) -> Vec<(String, Message)> {
    fn flips(bytes: &[u8]) -> impl Iterator<Item = (usize, Vec<u8>)> + '_ {
        (0..bytes.len() * 8).map(move |bit| {
            let mut b = bytes.to_vec();
            b[bit / 8] ^= 1 << (bit % 8);
            (bit, b)
        })
    }
    let mut out = Vec::new();
    for (bit, b) in flips(m.author.as_bytes()) {
        let mut x = m.clone();
        x.author = Author::from_slice(&b).expect("same length");
        out.push((format!("author bit {bit}"), x));
    }
    if let Some(p) = m.prev {
        for (bit, b) in flips(p.as_bytes()) {
            let mut x = m.clone();
            x.prev = Some(Digest::from_slice(&b).expect("same length"));
            out.push((format!("prev bit {bit}"), x));
        }
    }
    for (k, d) in m.deps.iter().enumerate() {
        for (bit, b) in flips(d.as_bytes()) {
            let mut x = m.clone();
            x.deps.remove(d);
            x.deps.insert(Digest::from_slice(&b).expect("same length"));
            out.push((format!("dep {k} bit {bit}"), x));
        }
    }
    for (bit, b) in flips(&m.payload) {
        let mut x = m.clone();
        x.payload = b;
        out.push((format!("payload bit {bit}"), x));
    }
    for (bit, b) in flips(m.signature.as_bytes()) {
        let mut x = m.clone();
        x.signature = Signature::from_slice(&b).expect("same length");
        out.push((format!("signature bit {bit}"), x));
    }
    out
}
