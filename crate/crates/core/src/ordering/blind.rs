//! Blind ordering as a restriction: rules only ever see an envelope digest, and
//! the payload is released once a threshold of nodes contributes shares.
//!
//! There is no cryptography here. The envelope is an access-control gate that
//! models what threshold decryption guarantees to the ordering layer.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ids::{DigestBuilder, MessageId, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlindError {
    #[error("{have} distinct shares, {threshold} needed to reveal")]
    InsufficientShares { have: usize, threshold: usize },
}

#[derive(Clone, PartialEq, Eq)]
pub struct BlindEnvelope {
    digest: MessageId,
    sealed: Vec<u8>,
}

impl std::fmt::Debug for BlindEnvelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlindEnvelope").field("digest", &self.digest).finish_non_exhaustive()
    }
}

impl BlindEnvelope {
    /// Envelope with a caller-chosen digest.
    pub fn with_digest(digest: MessageId, payload: Vec<u8>) -> Self {
        BlindEnvelope { digest, sealed: payload }
    }

    /// The only surface visible to ordering rules.
    pub fn digest(&self) -> MessageId {
        self.digest
    }
}

/// Seal `payload`; the digest commits to the payload and a sender nonce.
pub fn blind_wrap(payload: &[u8], nonce: u64) -> BlindEnvelope {
    let mut b = DigestBuilder::new("blind-envelope");
    b.u64(nonce).bytes(payload);
    BlindEnvelope { digest: MessageId(b.finish()), sealed: payload.to_vec() }
}

pub fn blind_reveal(
    envelope: &BlindEnvelope,
    shares: &BTreeSet<NodeId>,
    threshold: usize,
) -> Result<Vec<u8>, BlindError> {
    if shares.len() < threshold {
        return Err(BlindError::InsufficientShares { have: shares.len(), threshold });
    }
    Ok(envelope.sealed.clone())
}
