//! Blind ordering: rules see only envelope digests, so the committed order is
//! fixed before anyone can read a payload. Contents are revealed afterwards
//! once enough nodes contribute shares.

use std::collections::BTreeSet;

use fairfactory::ids::{Digest, MessageId, NodeId};
use fairfactory::ordering::{blind_reveal, blind_wrap, random_permute, BlindEnvelope, SharedRandomness};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let payloads: [&[u8]; 3] = [b"buy 10 at 101", b"sell 4 at 99", b"buy 1 at 100"];
    let envelopes: Vec<BlindEnvelope> = payloads.iter().enumerate().map(|(i, p)| blind_wrap(p, i as u64)).collect();
    let digests: BTreeSet<MessageId> = envelopes.iter().map(BlindEnvelope::digest).collect();

    let seed = SharedRandomness::from_digest(Digest::of(b"beacon"));
    let order = random_permute(&digests, &seed);

    // The order depends on the digests alone: the same digests under
    // different payloads order identically.
    let swapped: Vec<BlindEnvelope> =
        envelopes.iter().map(|e| BlindEnvelope::with_digest(e.digest(), b"?".to_vec())).collect();
    let again = random_permute(&swapped.iter().map(BlindEnvelope::digest).collect(), &seed);
    assert_eq!(order, again);
    println!("order fixed from digests only: {:?}", order.flatten());

    let threshold = 3;
    let too_few: BTreeSet<NodeId> = [NodeId(0), NodeId(2)].into();
    println!("reveal with 2 shares: {:?}", blind_reveal(&envelopes[0], &too_few, threshold));
    let enough: BTreeSet<NodeId> = (0..3).map(NodeId).collect();
    for id in order.flatten() {
        let env = envelopes.iter().find(|e| e.digest() == id).expect("committed digest has an envelope");
        println!("  {id:?} -> {}", String::from_utf8_lossy(&blind_reveal(env, &enough, threshold)?));
    }
    Ok(())
}
