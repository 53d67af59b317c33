//! Identifiers shared by every layer: message ids, node ids and content digests.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(bytes));
        Digest(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Incremental digest over a canonical, length-prefixed encoding.
pub struct DigestBuilder(Sha256);

impl DigestBuilder {
    pub fn new(domain: &str) -> Self {
        let mut b = DigestBuilder(Sha256::new());
        b.bytes(domain.as_bytes());
        b
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.0.update((v.len() as u64).to_be_bytes());
        self.0.update(v);
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.0.update(d.0);
        self
    }

    pub fn id(&mut self, id: &MessageId) -> &mut Self {
        self.0.update(id.0 .0);
        self
    }

    pub fn finish(self) -> Digest {
        let mut out = [0u8; 32];
        out.copy_from_slice(&self.0.finalize());
        Digest(out)
    }
}

/// Content digest of a message payload. Ordered lexicographically; this order is
/// the universal tie-break of every ordering rule.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId(pub Digest);

impl MessageId {
    pub fn of_payload(payload: &[u8]) -> Self {
        MessageId(Digest::of(payload))
    }

    /// Synthetic id whose lexicographic order follows `k`. Useful for fixtures
    /// where readable, ordered ids matter more than content addressing.
    pub fn numbered(k: u64) -> Self {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&k.to_be_bytes());
        MessageId(Digest(out))
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        Digest::from_hex(s).map(MessageId)
    }
}

impl fmt::Debug for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 .0[..24].iter().all(|&b| b == 0) {
            let mut tail = [0u8; 8];
            tail.copy_from_slice(&self.0 .0[24..]);
            write!(f, "m{}", u64::from_be_bytes(tail))
        } else {
            write!(f, "m:{:?}", self.0)
        }
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Replica identifier, `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
