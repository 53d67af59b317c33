use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{Digest, DigestBuilder, MessageId, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderingError {
    #[error("gamma must lie in (0.5, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("median of an empty multiset")]
    EmptyMultiset,
    #[error("order statistic out of range for n={n}, f={f}")]
    IndexOutOfRange { n: usize, f: usize },
    #[error("multisets must both have n={n} entries (got {a} and {b})")]
    SizeMismatch { n: usize, a: usize, b: usize },
    #[error("message {id} has timestamps in {present} reports, {required} required")]
    MissingTimestamps { id: MessageId, present: usize, required: usize },
    #[error("cannot select {k} of {available} messages")]
    SelectTooMany { k: usize, available: usize },
    #[error("ballot from {voter} ranks {id} twice")]
    DuplicateInBallot { voter: NodeId, id: MessageId },
    #[error("{0} appears in metadata but not in the message set")]
    UnknownMessage(MessageId),
    #[error("at least one ballot is required")]
    NoBallots,
    #[error("{ballots} ballots for a network of {nodes} nodes")]
    TooManyBallots { ballots: usize, nodes: usize },
}

/// One node's local arrival order. May omit messages it has not yet seen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    voter: NodeId,
    order: Vec<MessageId>,
}

impl Ballot {
    pub fn new(voter: NodeId, order: Vec<MessageId>) -> Result<Self, OrderingError> {
        let mut seen = BTreeSet::new();
        for id in &order {
            if !seen.insert(*id) {
                return Err(OrderingError::DuplicateInBallot { voter, id: *id });
            }
        }
        Ok(Ballot { voter, order })
    }

    pub fn voter(&self) -> NodeId {
        self.voter
    }

    pub fn order(&self) -> &[MessageId] {
        &self.order
    }

    pub fn contains(&self, id: &MessageId) -> bool {
        self.order.contains(id)
    }

    /// Position of every ranked message.
    pub fn positions(&self) -> HashMap<MessageId, usize> {
        self.order.iter().enumerate().map(|(i, id)| (*id, i)).collect()
    }

    /// The same ballot with everything outside `keep` dropped.
    pub fn restricted_to(&self, keep: &BTreeSet<MessageId>) -> Ballot {
        Ballot { voter: self.voter, order: self.order.iter().filter(|id| keep.contains(id)).copied().collect() }
    }
}

/// Logical timestamp on the shared clock. Unit-agnostic; the simulator uses
/// microseconds. `INFINITY` pads reports that never saw a message.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const INFINITY: Timestamp = Timestamp(u64::MAX);

    pub fn is_infinite(self) -> bool {
        self == Self::INFINITY
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampMap {
    pub reporter: NodeId,
    pub times: BTreeMap<MessageId, Timestamp>,
}

impl TimestampMap {
    pub fn new(reporter: NodeId, times: impl IntoIterator<Item = (MessageId, Timestamp)>) -> Self {
        TimestampMap { reporter, times: times.into_iter().collect() }
    }

    pub fn get(&self, id: &MessageId) -> Option<Timestamp> {
        self.times.get(id).copied()
    }
}

/// Randomness every honest node agrees on for one round.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SharedRandomness {
    pub seed: [u8; 32],
}

impl SharedRandomness {
    pub fn from_digest(d: Digest) -> Self {
        SharedRandomness { seed: d.0 }
    }
}

/// The result of an ordering rule: batches of messages whose relative order is
/// deemed indistinguishable. Each batch is kept sorted by `MessageId`, so the
/// flattened sequence is a total order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderedOutput {
    batches: Vec<Vec<MessageId>>,
}

impl OrderedOutput {
    pub fn from_batches(batches: Vec<Vec<MessageId>>) -> Self {
        let batches = batches
            .into_iter()
            .filter(|b| !b.is_empty())
            .map(|mut b| {
                b.sort();
                b
            })
            .collect();
        OrderedOutput { batches }
    }

    /// One singleton batch per message, preserving `order`.
    pub fn total(order: Vec<MessageId>) -> Self {
        OrderedOutput { batches: order.into_iter().map(|id| vec![id]).collect() }
    }

    pub fn batches(&self) -> &[Vec<MessageId>] {
        &self.batches
    }

    pub fn flatten(&self) -> Vec<MessageId> {
        self.batches.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn is_total(&self) -> bool {
        self.batches.iter().all(|b| b.len() == 1)
    }

    pub fn batch_index(&self) -> HashMap<MessageId, usize> {
        let mut out = HashMap::new();
        for (i, b) in self.batches.iter().enumerate() {
            for id in b {
                out.insert(*id, i);
            }
        }
        out
    }

    pub fn digest(&self) -> Digest {
        let mut b = DigestBuilder::new("ordered-output");
        b.u64(self.batches.len() as u64);
        for batch in &self.batches {
            b.u64(batch.len() as u64);
            for id in batch {
                b.id(id);
            }
        }
        b.finish()
    }
}

/// Parameters of the γ-majority precedence relation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotingParams {
    pub gamma: f64,
    /// Full network size, counting nodes whose ballots are missing.
    pub nodes: usize,
    /// Fault budget `f`; the γ quorum is measured against the `nodes - faults`
    /// guaranteed-honest ballots.
    pub faults: usize,
    pub reading: BallotReading,
}

/// How a ballot that does not rank both messages of a pair is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotReading {
    /// Only ballots ranking both messages count towards either direction.
    #[default]
    Pairwise,
    /// A ballot is a prefix of its voter's eventual arrival order: a ranked
    /// message precedes every unranked one, and a ballot ranking neither (or a
    /// missing ballot) may still go either way. An edge needs the γ quorum in
    /// this possibility count, so any honest γ-majority is always captured.
    ArrivalPrefix,
}

impl VotingParams {
    pub fn new(gamma: f64, nodes: usize, faults: usize) -> Self {
        VotingParams { gamma, nodes, faults, reading: BallotReading::Pairwise }
    }

    pub fn with_reading(mut self, reading: BallotReading) -> Self {
        self.reading = reading;
        self
    }

    pub fn check(&self) -> Result<(), OrderingError> {
        if !(self.gamma > 0.5 && self.gamma <= 1.0) {
            return Err(OrderingError::GammaOutOfRange(self.gamma));
        }
        Ok(())
    }

    /// `⌈γ·(n − f)⌉`, the number of agreeing ballots an edge needs.
    pub fn quorum(&self) -> usize {
        ceil_frac(self.gamma * self.nodes.saturating_sub(self.faults) as f64)
    }
}

/// Ceiling that forgives float noise just above an integer.
pub(crate) fn ceil_frac(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ballot_rejects_duplicates() {
        let a = MessageId::numbered(1);
        assert!(matches!(Ballot::new(NodeId(0), vec![a, a]), Err(OrderingError::DuplicateInBallot { .. })));
    }

    #[test]
    fn batches_are_sorted_and_empty_batches_dropped() {
        let (a, b) = (MessageId::numbered(1), MessageId::numbered(2));
        let out = OrderedOutput::from_batches(vec![vec![b, a], vec![]]);
        assert_eq!(out.batches(), &[vec![a, b]]);
        assert!(!out.is_total());
    }

    #[test]
    fn quorum_rounds_up() {
        assert_eq!(VotingParams::new(2.0 / 3.0, 3, 0).quorum(), 2);
        assert_eq!(VotingParams::new(0.75, 4, 0).quorum(), 3);
        assert_eq!(VotingParams::new(1.0, 4, 1).quorum(), 3);
        assert_eq!(VotingParams::new(0.75, 7, 1).quorum(), 5);
    }
}
