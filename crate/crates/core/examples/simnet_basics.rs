//! The deterministic network underneath everything: a seeded workload, link
//! latencies, the ground-truth reception log, and the ballots and timestamp
//! reports a node derives from it.

use fairfactory::ids::NodeId;
use fairfactory::simnet::{
    build_ballots_from_log, build_timestamps_from_log, generate_clients, stream_rng, ClientWorkload, DelayDist,
    EventQueue, LatencyModel, ReceptionLog,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Node 2 sits behind a slow, jittery link.
    let latency = LatencyModel::uniform_ms(1, 10).with_override(
        None,
        NodeId(2),
        DelayDist::Lognormal { median_us: 20_000.0, sigma: 0.5 },
    );
    let workload = ClientWorkload { rate: 500.0, ..ClientWorkload::default() };
    let sends = generate_clients(&workload, 3, 20_000, &latency, 42);
    println!("{} client messages in 20 ms", sends.len());

    let mut queue = EventQueue::new();
    for s in &sends {
        for (node, at) in &s.deliveries {
            queue.schedule(*at, *node, s.id)?;
        }
    }
    let mut log = ReceptionLog::new();
    for s in &sends {
        log.record_send(s.id, s.sent_us);
    }
    for ev in queue.run_until(u64::MAX) {
        log.record(ev.target, ev.payload, ev.time);
    }

    for node in log.nodes() {
        let ballot = build_ballots_from_log(&log, node);
        let times = build_timestamps_from_log(&log, node);
        let first = ballot.order()[0];
        println!("{node}: ballot of {} messages, first {first:?} at {:?} µs", ballot.order().len(), times.get(&first));
    }

    // Separate streams of one seed never interfere: the workload does not
    // shift when network sampling changes.
    let mut net = stream_rng(42, 2);
    println!(
        "a sampled hop to n2: {} µs (bound {} µs)",
        latency.sample(None, NodeId(2), &mut net),
        latency.hop_bound_us()
    );
    Ok(())
}
