//! A Byzantine node sends different views to different peers. The round it
//! does so cannot certify; the next round's views carry the evidence, the
//! equivocator is excluded, and the cluster commits again. Rounds the excluded
//! node would lead still time out, as with any crashed leader.

use fairfactory::adversary::{AdversaryConfig, Strategy};
use fairfactory::factory::{Mode, RuleConfig, Stage};
use fairfactory::ids::NodeId;
use fairfactory::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::new(4, 1, Mode::Optimized, RuleConfig::fifo_voting(1.0));
    sc.duration = 1.5;
    sc.adversary = AdversaryConfig::honest().with(NodeId(3), Strategy::EquivocateViews);
    let run = sc.run()?;
    let out = &run.sim.output;

    for t in out.traces.iter().take(5) {
        let evidence: Vec<String> =
            t.evidence.iter().map(|e| format!("{} accused by {:?}", e.accused, e.reporters)).collect();
        println!(
            "round {} leader {}: {:?}, synced at {:?} µs {}",
            t.round,
            t.leader,
            t.outcome(),
            t.first(Stage::Synced),
            evidence.join("; ")
        );
    }
    let sum = run.summary();
    println!("excluded by honest nodes: {:?}", sum.excluded);
    println!("committed {}/{} messages, {} divergences", sum.committed, sum.sent, sum.divergences);
    Ok(())
}
