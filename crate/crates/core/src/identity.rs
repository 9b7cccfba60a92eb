//! Canonical encoding, content addressing and Ed25519 signing.
//!
//! A message is named by the SHA-256 digest of its canonical encoding
//! followed by its signature. The signature itself covers the canonical
//! encoding of the four other fields, so a digest certifies the whole
//! message and the author key certifies the signed fields.

use std::collections::BTreeSet;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const AUTHOR_LEN: usize = 32;
pub const DIGEST_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

pub(crate) const TAG_AUTHOR: u8 = 0x01;
pub(crate) const TAG_PREV: u8 = 0x02;
pub(crate) const TAG_NO_PREV: u8 = 0x03;
pub(crate) const TAG_DEPS: u8 = 0x04;
pub(crate) const TAG_PAYLOAD: u8 = 0x05;
pub(crate) const TAG_SIGNATURE: u8 = 0x06;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("secret key does not belong to author {0}")]
    KeyMismatch(Author),
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("invalid hex: {0}")]
    Hex(String),
}

macro_rules! fixed_bytes {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, IdentityError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| IdentityError::BadLength {
                    expected: $len,
                    actual: bytes.len(),
                })?;
                Ok(Self(arr))
            }

            pub fn from_hex(s: &str) -> Result<Self, IdentityError> {
                Self::from_slice(&hex::decode(s).map_err(|e| IdentityError::Hex(e.to_string()))?)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                // Eight hex digits are plenty to tell fixtures apart.
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..8])
            }
        }
    };
}

/// Ed25519 verification key of a message author.
///
/// The byte order is only used to make serializations deterministic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Author([u8; AUTHOR_LEN]);
fixed_bytes!(Author, AUTHOR_LEN);

/// SHA-256 digest; a message identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; DIGEST_LEN]);
fixed_bytes!(Digest, DIGEST_LEN);

/// Ed25519 signature bytes. Not checked for well-formedness until verification.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);
fixed_bytes!(Signature, SIGNATURE_LEN);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

/// Signing half of an author keypair. Deliberately not serializable.
#[derive(Clone)]
pub struct AuthorSecret(SigningKey);

impl AuthorSecret {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        AuthorSecret(SigningKey::from_bytes(&seed))
    }

    /// Derives a keypair from an arbitrary label, for fixtures and simulations.
    pub fn derive(label: &[u8]) -> Self {
        Self::from_seed(Digest::of(label).0)
    }

    pub fn author(&self) -> Author {
        Author(self.0.verifying_key().to_bytes())
    }
}

impl fmt::Debug for AuthorSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AuthorSecret(for {:?})", self.author())
    }
}

fn push_field(out: &mut Vec<u8>, tag: u8, bytes: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Injective byte encoding of the signed message fields.
///
/// Every field is tagged and length-prefixed (4-byte big endian). Deps are
/// written in ascending byte order, which `BTreeSet` already guarantees, and
/// an absent `prev` gets its own tag so it can never collide with a digest.
pub fn canonical_encode(
    author: &Author,
    prev: Option<&Digest>,
    deps: &BTreeSet<Digest>,
    payload: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        3 * 5 + AUTHOR_LEN + DIGEST_LEN + 5 + deps.len() * DIGEST_LEN + payload.len(),
    );
    push_field(&mut out, TAG_AUTHOR, author.as_bytes());
    match prev {
        Some(p) => push_field(&mut out, TAG_PREV, p.as_bytes()),
        None => out.push(TAG_NO_PREV),
    }
    out.push(TAG_DEPS);
    out.extend_from_slice(&((deps.len() * DIGEST_LEN) as u32).to_be_bytes());
    for d in deps {
        out.extend_from_slice(d.as_bytes());
    }
    push_field(&mut out, TAG_PAYLOAD, payload);
    out
}

/// Appends the signature field to a canonical encoding.
pub(crate) fn encode_signature(out: &mut Vec<u8>, signature: &Signature) {
    push_field(out, TAG_SIGNATURE, signature.as_bytes());
}

pub fn sign(
    secret: &AuthorSecret,
    author: &Author,
    prev: Option<&Digest>,
    deps: &BTreeSet<Digest>,
    payload: &[u8],
) -> Result<Signature, IdentityError> {
    if secret.author() != *author {
        return Err(IdentityError::KeyMismatch(*author));
    }
    let bytes = canonical_encode(author, prev, deps, payload);
    Ok(Signature(secret.0.sign(&bytes).to_bytes()))
}

/// Checks a signature over the canonical encoding of the given fields.
/// Malformed keys or signatures verify as `false`.
pub fn verify_fields(
    author: &Author,
    prev: Option<&Digest>,
    deps: &BTreeSet<Digest>,
    payload: &[u8],
    signature: &Signature,
) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(author.as_bytes()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(signature.as_bytes());
    let bytes = canonical_encode(author, prev, deps, payload);
    key.verify_strict(&bytes, &sig).is_ok()
}
