//! Client workloads: Poisson arrivals, one-to-one or broadcast dissemination.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::latency::LatencyModel;
use super::queue::Micros;
use super::stream_rng;
use crate::ids::{DigestBuilder, MessageId, NodeId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissemination {
    /// Each message goes to one uniformly drawn node, which relays it.
    OneToOne,
    #[default]
    BroadcastToAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientWorkload {
    /// Messages per simulated second.
    pub rate: f64,
    #[serde(default)]
    pub dissemination: Dissemination,
    /// Stop after this many messages even if the duration has not elapsed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

impl Default for ClientWorkload {
    fn default() -> Self {
        ClientWorkload { rate: 200.0, dissemination: Dissemination::BroadcastToAll, count: None }
    }
}

/// One client message: when it was sent and when it lands at each target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientSend {
    pub id: MessageId,
    pub sent_us: Micros,
    pub deliveries: Vec<(NodeId, Micros)>,
}

/// Id of the `index`-th message of a workload seeded with `seed`.
pub fn client_message_id(seed: u64, index: u64) -> MessageId {
    let mut b = DigestBuilder::new("client-message");
    b.u64(seed).u64(index);
    MessageId(b.finish())
}

/// Sends in `[0, duration_us)`, ordered by send time.
pub fn generate_clients(
    w: &ClientWorkload,
    nodes: usize,
    duration_us: Micros,
    latency: &LatencyModel,
    seed: u64,
) -> Vec<ClientSend> {
    let mut out = Vec::new();
    if !(w.rate.is_finite() && w.rate > 0.0) || nodes == 0 {
        return out;
    }
    let mut rng = stream_rng(seed, 1);
    let gap = Exp::new(w.rate / 1e6).expect("positive rate");
    let mut t = 0.0f64;
    loop {
        t += gap.sample(&mut rng);
        let sent_us = t.floor() as Micros;
        let index = out.len() as u64;
        if sent_us >= duration_us || w.count.is_some_and(|c| index >= c) {
            break;
        }
        let targets: Vec<NodeId> = match w.dissemination {
            Dissemination::OneToOne => vec![NodeId(rng.random_range(0..nodes as u32))],
            Dissemination::BroadcastToAll => (0..nodes as u32).map(NodeId).collect(),
        };
        let deliveries = targets.into_iter().map(|n| (n, sent_us + latency.sample(None, n, &mut rng))).collect();
        out.push(ClientSend { id: client_message_id(seed, index), sent_us, deliveries });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(d: Dissemination) -> Vec<ClientSend> {
        let w = ClientWorkload { rate: 1_000.0, dissemination: d, count: Some(1) };
        generate_clients(&w, 4, 10_000_000, &LatencyModel::default(), 7)
    }

    #[test]
    fn broadcast_reaches_every_node() {
        let sends = one(Dissemination::BroadcastToAll);
        assert_eq!(sends.len(), 1);
        let targets: Vec<_> = sends[0].deliveries.iter().map(|d| d.0).collect();
        assert_eq!(targets, (0..4).map(NodeId).collect::<Vec<_>>());
        assert!(sends[0].deliveries.iter().all(|d| d.1 > sends[0].sent_us));
    }

    #[test]
    fn one_to_one_reaches_one_node() {
        assert_eq!(one(Dissemination::OneToOne)[0].deliveries.len(), 1);
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        let w = ClientWorkload { rate: 100.0, ..Default::default() };
        let n = generate_clients(&w, 4, 10_000_000, &LatencyModel::default(), 3).len() as f64;
        assert!((n - 1_000.0).abs() <= 3.0 * 1_000f64.sqrt(), "{n}");
    }

    #[test]
    fn zero_rate_is_empty() {
        let w = ClientWorkload { rate: 0.0, ..Default::default() };
        assert!(generate_clients(&w, 4, 10_000_000, &LatencyModel::default(), 3).is_empty());
    }

    #[test]
    fn ids_are_unique() {
        let w = ClientWorkload::default();
        let sends = generate_clients(&w, 4, 5_000_000, &LatencyModel::default(), 3);
        let ids: std::collections::BTreeSet<_> = sends.iter().map(|s| s.id).collect();
        assert_eq!(ids.len(), sends.len());
    }
}
