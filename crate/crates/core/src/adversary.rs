//! Byzantine strategies. Each one alters only the adversary's own outbound
//! reports and messages.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factory::{LocalView, Metadata};
use crate::ids::{DigestBuilder, MessageId, NodeId};
use crate::ordering::{median_timestamp, padded_times, Ballot, Timestamp, TimestampMap};
use crate::simnet::{client_message_id, stream_rng, ClientSend, DelayDist, LatencyModel, Micros};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgePolicy {
    /// Report the true arrival order backwards.
    #[default]
    Reverse,
    /// Move the first-received message to the end.
    Rotate,
    /// A fresh seeded shuffle every round.
    Shuffle,
}

/// Which messages a suppressing node hides. Indices refer to the workload's
/// send order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MessageFilter {
    All,
    /// Messages whose id's first byte is divisible by `modulus`.
    Modulo {
        modulus: u8,
    },
    Indices {
        indices: Vec<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Honest,
    /// Misreport timestamps so that `target` (workload indices) swap median
    /// order. Without a target every pair the node reports is inverted.
    MedianSwap {
        #[serde(default)]
        target: Option<[u64; 2]>,
        #[serde(default = "yes")]
        oracle: bool,
    },
    BallotForge {
        #[serde(default)]
        policy: ForgePolicy,
    },
    /// Send diverging views to the two halves of the peer set, and never vote.
    EquivocateViews,
    Suppress {
        filter: MessageFilter,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientAttack {
    CondorcetForger {
        k: usize,
        /// Send time of the first forged message.
        #[serde(default)]
        start_us: Micros,
        /// Spacing between consecutive arrivals at one node.
        #[serde(default = "default_gap")]
        gap_us: Micros,
    },
}

fn default_gap() -> Micros {
    1_000
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    #[serde(default)]
    pub byzantine: BTreeMap<NodeId, Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byzantine_clients: Option<ClientAttack>,
}

impl AdversaryConfig {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: NodeId, strategy: Strategy) -> Self {
        self.byzantine.insert(node, strategy);
        self
    }

    pub fn byzantine_nodes(&self) -> BTreeSet<NodeId> {
        self.byzantine.keys().copied().collect()
    }

    pub fn strategy(&self, node: NodeId) -> &Strategy {
        self.byzantine.get(&node).unwrap_or(&Strategy::Honest)
    }

    pub fn honest_nodes(&self, n: usize) -> BTreeSet<NodeId> {
        (0..n as u32).map(NodeId).filter(|id| !self.byzantine.contains_key(id)).collect()
    }

    pub fn validate(&self, n: usize, f: usize) -> Result<(), String> {
        if self.byzantine.len() > f {
            return Err(format!("{} byzantine nodes exceed faults = {f}", self.byzantine.len()));
        }
        if let Some(id) = self.byzantine.keys().find(|id| id.index() >= n) {
            return Err(format!("byzantine node {id} is not one of the {n} nodes"));
        }
        if let Some(ClientAttack::CondorcetForger { k, .. }) = self.byzantine_clients {
            if k < 3 {
                return Err(format!("condorcet_forger needs k >= 3, got {k}"));
            }
        }
        Ok(())
    }
}

/// A strategy with workload indices resolved to message ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    MedianSwap { target: Option<(MessageId, MessageId)>, oracle: bool },
    BallotForge(ForgePolicy),
    Equivocate,
    Suppress(ResolvedFilter),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResolvedFilter {
    All,
    Modulo(u8),
    Ids(BTreeSet<MessageId>),
}

impl ResolvedFilter {
    pub fn matches(&self, id: &MessageId) -> bool {
        match self {
            ResolvedFilter::All => true,
            ResolvedFilter::Modulo(k) => id.0 .0[0].is_multiple_of((*k).max(1)),
            ResolvedFilter::Ids(ids) => ids.contains(id),
        }
    }
}

impl Behavior {
    pub fn resolve(strategy: &Strategy, workload_seed: u64) -> Behavior {
        let id = |i: u64| client_message_id(workload_seed, i);
        match strategy {
            Strategy::Honest => Behavior::Honest,
            Strategy::MedianSwap { target, oracle } => {
                Behavior::MedianSwap { target: target.map(|[a, b]| (id(a), id(b))), oracle: *oracle }
            }
            Strategy::BallotForge { policy } => Behavior::BallotForge(*policy),
            Strategy::EquivocateViews => Behavior::Equivocate,
            Strategy::Suppress { filter } => Behavior::Suppress(match filter {
                MessageFilter::All => ResolvedFilter::All,
                MessageFilter::Modulo { modulus } => ResolvedFilter::Modulo(*modulus),
                MessageFilter::Indices { indices } => ResolvedFilter::Ids(indices.iter().map(|&i| id(i)).collect()),
            }),
        }
    }

    pub fn is_honest(&self) -> bool {
        *self == Behavior::Honest
    }
}

fn reversed(med: &BTreeMap<MessageId, Timestamp>, a: &MessageId, b: &MessageId) -> bool {
    (med[b], *b) < (med[a], *a)
}

fn medians_with(
    mine: &TimestampMap,
    others: &[TimestampMap],
    ids: [&MessageId; 2],
) -> Option<BTreeMap<MessageId, Timestamp>> {
    let mut all = others.to_vec();
    all.push(mine.clone());
    ids.iter().map(|id| Some((**id, median_timestamp(&padded_times(id, &all)).ok()?))).collect()
}

/// Rewrite this node's report for the pair `(a, b)` so that `b` ends up ordered
/// first.
///
/// Swapping the node's own two readings is tried first. With oracle access to
/// the other reports the node falls back to the most extreme readings when the
/// swap is not enough; without it the swap is all it has.
pub fn median_swap(
    true_times: &TimestampMap,
    target: (MessageId, MessageId),
    others: Option<&[TimestampMap]>,
) -> TimestampMap {
    let (a, b) = target;
    let (Some(ta), Some(tb)) = (true_times.get(&a), true_times.get(&b)) else {
        return true_times.clone();
    };
    let mut swapped = true_times.clone();
    swapped.times.insert(a, tb.max(ta));
    swapped.times.insert(b, ta.min(tb));
    let Some(others) = others else { return swapped };
    let works = |r: &TimestampMap| medians_with(r, others, [&a, &b]).is_some_and(|m| reversed(&m, &a, &b));
    if works(&swapped) {
        return swapped;
    }
    let top = others
        .iter()
        .flat_map(|r| r.times.values())
        .chain(true_times.times.values())
        .filter(|t| !t.is_infinite())
        .map(|t| t.0)
        .max()
        .unwrap_or(0);
    let mut extreme = true_times.clone();
    extreme.times.insert(a, Timestamp(top.saturating_add(1).min(u64::MAX - 1)));
    extreme.times.insert(b, Timestamp(0));
    extreme
}

/// Invert the order of every message this node reports, keeping the set of
/// reported values.
pub fn invert_timestamps(true_times: &TimestampMap) -> TimestampMap {
    let mut by_time: Vec<(Timestamp, MessageId)> = true_times.times.iter().map(|(m, t)| (*t, *m)).collect();
    by_time.sort();
    let values: Vec<Timestamp> = by_time.iter().map(|p| p.0).collect();
    let times = by_time.iter().rev().zip(values).map(|((_, m), t)| (*m, t));
    TimestampMap::new(true_times.reporter, times)
}

pub fn forge_ballot(true_ballot: &Ballot, policy: ForgePolicy, seed: u64) -> Ballot {
    let mut order = true_ballot.order().to_vec();
    match policy {
        ForgePolicy::Reverse => order.reverse(),
        ForgePolicy::Rotate => {
            if !order.is_empty() {
                order.rotate_left(1);
            }
        }
        ForgePolicy::Shuffle => order.shuffle(&mut stream_rng(seed, 7)),
    }
    Ballot::new(true_ballot.voter(), order).expect("permutation of a valid ballot")
}

/// The extra message that tells the two equivocation variants apart.
pub fn phantom_message(node: NodeId, round: u64) -> MessageId {
    let mut b = DigestBuilder::new("phantom");
    b.u64(node.0 as u64).u64(round);
    MessageId(b.finish())
}

fn with_extra(view: &LocalView, extra: MessageId) -> LocalView {
    let mut v = view.clone();
    v.messages.insert(extra);
    v.metadata = match &view.metadata {
        Metadata::Ballot(b) => {
            let mut order = b.order().to_vec();
            order.push(extra);
            Metadata::Ballot(Ballot::new(b.voter(), order).expect("phantom id is fresh"))
        }
        Metadata::Timestamps(t) => {
            let mut t = t.clone();
            let last = t.times.values().filter(|x| !x.is_infinite()).map(|x| x.0).max().unwrap_or(0);
            t.times.insert(extra, Timestamp(last + 1));
            Metadata::Timestamps(t)
        }
        Metadata::Randomness(d) => {
            let mut b = DigestBuilder::new("phantom-randomness");
            b.digest(d);
            Metadata::Randomness(b.finish())
        }
    };
    v
}

/// The first half of `peers` (rounded up) receives the true view, the rest a
/// variant carrying one extra message.
pub fn equivocate_views(true_view: &LocalView, peers: &[NodeId]) -> Vec<(NodeId, LocalView)> {
    let variant = with_extra(true_view, phantom_message(true_view.node, true_view.round));
    let split = peers.len().div_ceil(2);
    peers.iter().enumerate().map(|(i, p)| (*p, if i < split { true_view.clone() } else { variant.clone() })).collect()
}

pub fn suppress(view: &LocalView, filter: &ResolvedFilter) -> LocalView {
    let keep: BTreeSet<MessageId> = view.messages.iter().filter(|m| !filter.matches(m)).copied().collect();
    let mut v = view.clone();
    v.metadata = match &view.metadata {
        Metadata::Ballot(b) => Metadata::Ballot(b.restricted_to(&keep)),
        Metadata::Timestamps(t) => Metadata::Timestamps(TimestampMap::new(
            t.reporter,
            t.times.iter().filter(|(m, _)| keep.contains(m)).map(|(m, x)| (*m, *x)),
        )),
        Metadata::Randomness(d) => Metadata::Randomness(*d),
    };
    v.messages = keep;
    v
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForgeError {
    #[error("a cycle needs at least 3 messages, got {0}")]
    TooShort(usize),
    #[error("need at least {k} target nodes, got {nodes}")]
    TooFewNodes { k: usize, nodes: usize },
    #[error("jitter of {jitter_us}µs on the link to {node} can reorder arrivals spaced {gap_us}µs apart")]
    Jitter { node: NodeId, jitter_us: Micros, gap_us: Micros },
}

fn jitter(d: &DelayDist) -> (Micros, Micros) {
    match *d {
        DelayDist::Fixed { us } => (us.max(1), 0),
        DelayDist::Uniform { min_us, max_us } => (min_us.max(1), max_us.max(min_us).max(1) - min_us.max(1)),
        DelayDist::Lognormal { .. } => (1, d.bound()),
    }
}

/// A send schedule whose arrivals realize a `k`-cycle: node `j` receives the
/// forged messages in the order `m_j, m_{j+1}, …, m_{j-1}`.
///
/// Each message is sent to each target separately, timed against the known
/// delay of the link. The forge fails when link jitter could swap two
/// consecutive arrivals.
pub fn condorcet_forger(
    k: usize,
    nodes: &[NodeId],
    latency: &LatencyModel,
    start_us: Micros,
    gap_us: Micros,
    seed: u64,
) -> Result<Vec<ClientSend>, ForgeError> {
    if k < 3 {
        return Err(ForgeError::TooShort(k));
    }
    if nodes.len() < k {
        return Err(ForgeError::TooFewNodes { k, nodes: nodes.len() });
    }
    let links: Vec<(Micros, Micros)> = nodes.iter().map(|n| jitter(latency.link(None, *n))).collect();
    for (n, (_, j)) in nodes.iter().zip(&links) {
        if *j >= gap_us {
            return Err(ForgeError::Jitter { node: *n, jitter_us: *j, gap_us });
        }
    }
    let longest = links.iter().map(|l| l.0).max().unwrap_or(0);
    let base = start_us + longest;
    let mut sends = Vec::with_capacity(k);
    for i in 0..k {
        let mut deliveries = Vec::new();
        let mut first_send = Micros::MAX;
        for (j, node) in nodes.iter().enumerate() {
            let slot = ((i + k - j % k) % k) as Micros;
            let arrival = base + slot * gap_us;
            first_send = first_send.min(arrival - links[j].0);
            deliveries.push((*node, arrival));
        }
        let mut b = DigestBuilder::new("forged-message");
        b.u64(seed).u64(i as u64);
        sends.push(ClientSend { id: MessageId(b.finish()), sent_us: first_send, deliveries });
    }
    Ok(sends)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{fifo_via_timestamping, Ballot};

    fn m(k: u64) -> MessageId {
        MessageId::numbered(k)
    }

    fn hm(h: u64, mm: u64) -> Timestamp {
        Timestamp(h * 60 + mm)
    }

    fn table() -> Vec<TimestampMap> {
        vec![
            TimestampMap::new(NodeId(0), [(m(1), hm(3, 0)), (m(2), hm(3, 1))]),
            TimestampMap::new(NodeId(1), [(m(1), hm(3, 2)), (m(2), hm(3, 3))]),
            TimestampMap::new(NodeId(2), [(m(1), hm(3, 4)), (m(2), hm(3, 5))]),
        ]
    }

    #[test]
    fn swap_reproduces_the_narrative() {
        let reports = table();
        let others = [reports[0].clone(), reports[2].clone()];
        let forged = median_swap(&reports[1], (m(1), m(2)), Some(&others));
        assert_eq!(forged.get(&m(1)), Some(hm(3, 3)));
        assert_eq!(forged.get(&m(2)), Some(hm(3, 2)));
        let all = vec![reports[0].clone(), forged, reports[2].clone()];
        let out = fifo_via_timestamping(&[m(1), m(2)].into(), &all, 1).unwrap();
        assert_eq!(out.output.flatten(), vec![m(2), m(1)]);
    }

    #[test]
    fn swap_without_oracle_is_plain_swap() {
        let forged = median_swap(&table()[1], (m(1), m(2)), None);
        assert_eq!(forged.get(&m(1)), Some(hm(3, 3)));
    }

    #[test]
    fn inversion_keeps_values() {
        let t = TimestampMap::new(NodeId(0), [(m(1), Timestamp(1)), (m(2), Timestamp(5)), (m(3), Timestamp(9))]);
        let inv = invert_timestamps(&t);
        assert_eq!(inv.get(&m(1)), Some(Timestamp(9)));
        assert_eq!(inv.get(&m(3)), Some(Timestamp(1)));
        assert_eq!(inv.get(&m(2)), Some(Timestamp(5)));
    }

    #[test]
    fn forged_ballots_are_permutations() {
        let b = Ballot::new(NodeId(3), vec![m(1), m(2), m(3)]).unwrap();
        assert_eq!(forge_ballot(&b, ForgePolicy::Reverse, 0).order(), &[m(3), m(2), m(1)]);
        assert_eq!(forge_ballot(&b, ForgePolicy::Rotate, 0).order(), &[m(2), m(3), m(1)]);
        let mut s = forge_ballot(&b, ForgePolicy::Shuffle, 4).order().to_vec();
        s.sort();
        assert_eq!(s, b.order());
    }

    fn view(ids: &[u64]) -> LocalView {
        let order: Vec<_> = ids.iter().map(|&k| m(k)).collect();
        LocalView {
            node: NodeId(3),
            round: 2,
            messages: order.iter().copied().collect(),
            metadata: Metadata::Ballot(Ballot::new(NodeId(3), order).unwrap()),
            reshared: BTreeMap::new(),
        }
    }

    #[test]
    fn equivocation_splits_peers() {
        let v = view(&[1, 2]);
        let out = equivocate_views(&v, &[NodeId(0), NodeId(1), NodeId(2)]);
        let digests: BTreeSet<_> = out.iter().map(|(_, v)| v.digest()).collect();
        assert_eq!(digests.len(), 2);
        assert_eq!(out[0].1, v);
        assert!(out[2].1.is_consistent());
        assert_eq!(out[2].1.messages.len(), 3);
    }

    #[test]
    fn suppression_drops_messages_and_metadata() {
        let v = suppress(&view(&[1, 2, 3]), &ResolvedFilter::Ids([m(2)].into()));
        assert_eq!(v.messages, [m(1), m(3)].into());
        assert!(v.is_consistent());
    }

    #[test]
    fn forger_builds_rotated_arrivals() {
        let nodes = [NodeId(0), NodeId(1), NodeId(2)];
        let lat = LatencyModel::fixed_us(2_000);
        let sends = condorcet_forger(3, &nodes, &lat, 0, 1_000, 1).unwrap();
        for (j, node) in nodes.iter().enumerate() {
            let mut arrivals: Vec<(Micros, usize)> = sends
                .iter()
                .enumerate()
                .map(|(i, s)| (s.deliveries.iter().find(|d| d.0 == *node).unwrap().1, i))
                .collect();
            arrivals.sort();
            let order: Vec<usize> = arrivals.iter().map(|a| a.1).collect();
            assert_eq!(order, (0..3).map(|x| (x + j) % 3).collect::<Vec<_>>());
        }
    }

    #[test]
    fn forger_rejects_jitter() {
        let nodes = [NodeId(0), NodeId(1), NodeId(2)];
        let err = condorcet_forger(3, &nodes, &LatencyModel::uniform_ms(1, 10), 0, 1_000, 1).unwrap_err();
        assert!(matches!(err, ForgeError::Jitter { .. }));
        assert_eq!(condorcet_forger(2, &nodes, &LatencyModel::fixed_us(1), 0, 10, 1), Err(ForgeError::TooShort(2)));
    }

    #[test]
    fn config_validation() {
        let c = AdversaryConfig::honest().with(NodeId(1), Strategy::EquivocateViews).with(NodeId(2), Strategy::Honest);
        assert!(c.validate(4, 1).is_err());
        assert!(c.validate(7, 2).is_ok());
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<AdversaryConfig>(&text).unwrap(), c);
    }
}
