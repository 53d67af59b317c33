//! Ground-truth reception log: the first arrival of every message at every node.

use std::collections::{BTreeMap, BTreeSet};

use super::queue::Micros;
use crate::ids::{MessageId, NodeId};
use crate::ordering::{Ballot, Timestamp, TimestampMap};

#[derive(Clone, Debug, Copy, PartialEq, Eq)]
pub struct Reception {
    pub node: NodeId,
    pub message: MessageId,
    pub arrival_us: Micros,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReceptionLog {
    entries: Vec<Reception>,
    arrivals: BTreeMap<(NodeId, MessageId), Micros>,
    first: BTreeMap<MessageId, Micros>,
    sent: BTreeMap<MessageId, Micros>,
}

impl ReceptionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_send(&mut self, message: MessageId, sent_us: Micros) {
        self.sent.entry(message).or_insert(sent_us);
    }

    /// Record an arrival. Returns false, recording nothing, if `node` already
    /// had `message`.
    pub fn record(&mut self, node: NodeId, message: MessageId, arrival_us: Micros) -> bool {
        if self.arrivals.contains_key(&(node, message)) {
            return false;
        }
        self.arrivals.insert((node, message), arrival_us);
        let first = self.first.entry(message).or_insert(arrival_us);
        *first = (*first).min(arrival_us);
        self.entries.push(Reception { node, message, arrival_us });
        true
    }

    /// Entries in append order.
    pub fn entries(&self) -> &[Reception] {
        &self.entries
    }

    pub fn arrival(&self, node: NodeId, message: &MessageId) -> Option<Micros> {
        self.arrivals.get(&(node, *message)).copied()
    }

    pub fn sent(&self, message: &MessageId) -> Option<Micros> {
        self.sent.get(message).copied()
    }

    pub fn sends(&self) -> &BTreeMap<MessageId, Micros> {
        &self.sent
    }

    pub fn first_arrival(&self, message: &MessageId) -> Option<Micros> {
        self.first.get(message).copied()
    }

    /// Whether `node` received `a` strictly before `b`, counting a message it
    /// never received as arriving after everything.
    pub fn received_before(&self, node: NodeId, a: &MessageId, b: &MessageId) -> bool {
        match (self.arrival(node, a), self.arrival(node, b)) {
            (Some(ta), Some(tb)) => ta < tb,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.arrivals.keys().map(|(n, _)| *n).collect()
    }

    fn arrivals_of(&self, node: NodeId) -> impl Iterator<Item = (MessageId, Micros)> + '_ {
        self.arrivals
            .range((node, MessageId::numbered(0))..)
            .take_while(move |((n, _), _)| *n == node)
            .map(|((_, m), t)| (*m, *t))
    }
}

/// The node's arrival order, ties broken by id.
pub fn build_ballots_from_log(log: &ReceptionLog, node: NodeId) -> Ballot {
    let mut seen: Vec<(Micros, MessageId)> = log.arrivals_of(node).map(|(m, t)| (t, m)).collect();
    seen.sort_unstable();
    Ballot::new(node, seen.into_iter().map(|(_, m)| m).collect()).expect("log holds first arrivals only")
}

pub fn build_timestamps_from_log(log: &ReceptionLog, node: NodeId) -> TimestampMap {
    TimestampMap::new(node, log.arrivals_of(node).map(|(m, t)| (m, Timestamp(t))))
}
