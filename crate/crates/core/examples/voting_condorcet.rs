//! FIFO ordering by ranked voting, and what happens when the ballots form a
//! Condorcet cycle.
//!
//! First the rules are applied directly to three cyclic ballots, then a
//! malicious client forges the same cycle over a simulated network and the
//! whole protocol commits the result.

use std::collections::BTreeSet;

use fairfactory::adversary::{AdversaryConfig, ClientAttack};
use fairfactory::factory::{Mode, RuleConfig};
use fairfactory::ids::{MessageId, NodeId};
use fairfactory::ordering::{
    build_precedence_graph, fifo_via_voting, pairwise_majorities, ranked_pairs_order, Ballot, VotingParams,
};
use fairfactory::scenario::Scenario;
use fairfactory::simnet::{ClientWorkload, LatencyModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let [a, b, c] = [1, 2, 3].map(MessageId::numbered);
    let s: BTreeSet<_> = [a, b, c].into();
    let ballots = vec![
        Ballot::new(NodeId(0), vec![a, b, c])?,
        Ballot::new(NodeId(1), vec![b, c, a])?,
        Ballot::new(NodeId(2), vec![c, a, b])?,
    ];

    // With γ = 2/3 every pair has a qualifying majority, and the edges close a cycle.
    let params = VotingParams::new(2.0 / 3.0, 3, 0);
    let graph = build_precedence_graph(&s, &ballots, &params)?;
    println!("precedence edges: {:?}", graph.edges());
    println!("fifo_via_voting:  {:?}", fifo_via_voting(&s, &ballots, &params)?.batches());

    for m in pairwise_majorities(&s, &ballots) {
        println!("  {:?} beats {:?} {}-{}", m.winner, m.loser, m.wins, m.losses);
    }
    println!("ranked pairs:     {:?}", ranked_pairs_order(&s, &ballots)?.batches());

    // The same cycle, produced by a client that times its sends per node.
    for rule in [RuleConfig::fifo_voting(2.0 / 3.0), RuleConfig::RankedPairs] {
        let mut sc = Scenario::new(3, 0, Mode::Optimized, rule);
        sc.latency = LatencyModel::fixed_us(2_000);
        sc.workload = ClientWorkload { count: Some(0), ..ClientWorkload::default() };
        sc.adversary = AdversaryConfig {
            byzantine_clients: Some(ClientAttack::CondorcetForger { k: 3, start_us: 0, gap_us: 1_000 }),
            ..AdversaryConfig::default()
        };
        sc.duration = 1.0;
        let run = sc.run()?;
        let committed: Vec<_> = run.sim.output.decisions().entries().iter().filter(|d| !d.output.is_empty()).collect();
        for d in committed {
            println!("{:>12} round {}: {:?}", rule.name(), d.round, d.output.batches());
        }
    }
    Ok(())
}
