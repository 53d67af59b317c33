//! Random ordering driven by shared randomness.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::types::{OrderedOutput, OrderingError, SharedRandomness};
use crate::ids::{Digest, DigestBuilder, MessageId};

/// Generator every node derives identically from the round's randomness.
pub fn shared_rng(r: &SharedRandomness) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(r.seed)
}

/// Uniform permutation of `s`: Fisher–Yates over the id-sorted set.
pub fn random_permute(s: &BTreeSet<MessageId>, r: &SharedRandomness) -> OrderedOutput {
    let mut order: Vec<MessageId> = s.iter().copied().collect();
    let mut rng = shared_rng(r);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    OrderedOutput::total(order)
}

/// Per-message pseudo-random value `H(seed ‖ id)`.
pub fn selection_value(r: &SharedRandomness, id: &MessageId) -> Digest {
    let mut b = DigestBuilder::new("pseudo-random-select");
    b.bytes(&r.seed).id(id);
    b.finish()
}

/// The `k` messages with the lowest pseudo-random values (ties by id).
pub fn pseudo_random_select(
    s: &BTreeSet<MessageId>,
    r: &SharedRandomness,
    k: usize,
) -> Result<BTreeSet<MessageId>, OrderingError> {
    if k > s.len() {
        return Err(OrderingError::SelectTooMany { k, available: s.len() });
    }
    let mut scored: Vec<(Digest, MessageId)> = s.iter().map(|id| (selection_value(r, id), *id)).collect();
    scored.sort_unstable();
    Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
}
