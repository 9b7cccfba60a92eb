use std::collections::BTreeSet;

use thiserror::Error;

use crate::identity::{
    self, canonical_encode, encode_signature, Author, AuthorSecret, Digest, IdentityError,
    Signature, AUTHOR_LEN, DIGEST_LEN, SIGNATURE_LEN, TAG_AUTHOR, TAG_DEPS, TAG_NO_PREV,
    TAG_PAYLOAD, TAG_PREV, TAG_SIGNATURE,
};

/// An immutable, signed node of the hash graph.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Message {
    pub author: Author,
    /// Previous message of the same author, `None` for the first one.
    pub prev: Option<Digest>,
    /// At most one dependency per other author.
    pub deps: BTreeSet<Digest>,
    pub payload: Vec<u8>,
    pub signature: Signature,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("expected field tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("field length {0} is invalid")]
    BadLength(usize),
    #[error("dependencies are not strictly ascending")]
    UnsortedDeps,
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

impl From<IdentityError> for DecodeError {
    fn from(e: IdentityError) -> Self {
        match e {
            IdentityError::BadLength { actual, .. } => DecodeError::BadLength(actual),
            _ => DecodeError::Truncated,
        }
    }
}

impl Message {
    /// Signs a new message. Fails only if `secret` is not the author's key.
    pub fn create(
        secret: &AuthorSecret,
        prev: Option<Digest>,
        deps: BTreeSet<Digest>,
        payload: impl Into<Vec<u8>>,
    ) -> Result<Self, IdentityError> {
        let author = secret.author();
        let payload = payload.into();
        let signature = identity::sign(secret, &author, prev.as_ref(), &deps, &payload)?;
        Ok(Message {
            author,
            prev,
            deps,
            payload,
            signature,
        })
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        canonical_encode(&self.author, self.prev.as_ref(), &self.deps, &self.payload)
    }

    /// Full wire encoding: the signed bytes followed by the signature field.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        encode_signature(&mut out, &self.signature);
        out
    }

    pub fn id(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }

    pub fn verify(&self) -> bool {
        identity::verify_fields(
            &self.author,
            self.prev.as_ref(),
            &self.deps,
            &self.payload,
            &self.signature,
        )
    }

    /// Inverse of [`Message::to_bytes`]. Rejects anything that would not
    /// re-encode to the same bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader { buf: bytes };
        let author = Author::from_slice(r.field(TAG_AUTHOR, Some(AUTHOR_LEN))?)?;
        let prev = match r.peek()? {
            TAG_NO_PREV => {
                r.byte()?;
                None
            }
            _ => Some(Digest::from_slice(r.field(TAG_PREV, Some(DIGEST_LEN))?)?),
        };
        let raw_deps = r.field(TAG_DEPS, None)?;
        if raw_deps.len() % DIGEST_LEN != 0 {
            return Err(DecodeError::BadLength(raw_deps.len()));
        }
        let mut deps = BTreeSet::new();
        let mut last: Option<Digest> = None;
        for chunk in raw_deps.chunks_exact(DIGEST_LEN) {
            let d = Digest::from_slice(chunk)?;
            if last.is_some_and(|l| l >= d) {
                return Err(DecodeError::UnsortedDeps);
            }
            last = Some(d);
            deps.insert(d);
        }
        let payload = r.field(TAG_PAYLOAD, None)?.to_vec();
        let signature = Signature::from_slice(r.field(TAG_SIGNATURE, Some(SIGNATURE_LEN))?)?;
        if !r.buf.is_empty() {
            return Err(DecodeError::Trailing(r.buf.len()));
        }
        Ok(Message {
            author,
            prev,
            deps,
            payload,
            signature,
        })
    }
}

/// Identifier of a message, computed over every field including the signature.
pub fn msg_id(m: &Message) -> Digest {
    m.id()
}

/// Checks the author's signature over the first four fields.
pub fn verify(m: &Message) -> bool {
    m.verify()
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Result<u8, DecodeError> {
        self.buf.first().copied().ok_or(DecodeError::Truncated)
    }

    fn byte(&mut self) -> Result<u8, DecodeError> {
        let b = self.peek()?;
        self.buf = &self.buf[1..];
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn field(&mut self, tag: u8, len: Option<usize>) -> Result<&'a [u8], DecodeError> {
        let found = self.byte()?;
        if found != tag {
            return Err(DecodeError::UnexpectedTag {
                expected: tag,
                found,
            });
        }
        let n = u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        if len.is_some_and(|l| l != n) {
            return Err(DecodeError::BadLength(n));
        }
        self.take(n)
    }
}
