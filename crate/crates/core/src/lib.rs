//! Byzantine fault-tolerant two-phase append-only logs.
//!
//! Single-author logs over a signed hash graph, merged as state-based
//! CRDTs. A log grows while its author behaves and, once two messages with
//! the same predecessor are seen, shrinks back to the last message before
//! the fork and never grows again. A [`Frontier`] holds one such log per
//! author and is itself a CRDT.
//!
//! - [`identity`]: canonical encoding, digests, Ed25519 signatures
//! - [`store`] and [`graph`]: validated message store and its relations
//! - [`log`] and [`frontier`]: the two CRDTs
//! - [`sim`]: deterministic multi-replica simulation with Byzantine actors
//! - [`oracle`]: brute-force checkers for the algebraic laws

pub mod fixtures;
pub mod frontier;
pub mod graph;
pub mod identity;
pub mod log;
pub mod message;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod store;
pub mod vectors;

pub use frontier::{Frontier, FrontierError, SnapshotError};
pub use graph::GraphError;
pub use identity::{Author, AuthorSecret, Digest, IdentityError, Signature};
pub use log::{Log, LogError, LogValidityReport, OrderRule, Phase, Property};
pub use message::{msg_id, verify, DecodeError, Message};
pub use store::{InsertOutcome, MessageStore, RejectReason, ReplayError};
