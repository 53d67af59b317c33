//! A scenario file run end to end, the same way `fairsim run` does it: write
//! the artifacts, read them back, and audit the committed log.
//!
//! Here a ballot-forging node is placed in a network too small for the
//! voting rule's fault bound, and ballots are read pairwise, so the audit has
//! something to find.

use fairfactory::scenario::{Artifacts, AuditChecks, Scenario};

const SCENARIO: &str = r#"{
  "nodes": 3,
  "faults": 1,
  "rule": { "kind": "fifo_voting", "gamma": 1.0, "reading": "pairwise" },
  "mode": "optimized",
  "latency": { "default": { "kind": "uniform", "min_us": 1000, "max_us": 10000 } },
  "workload": { "rate": 300 },
  "adversary": { "byzantine": { "2": { "kind": "ballot_forge", "policy": "reverse" } } },
  "duration": 5,
  "seed": 7
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::from_json(SCENARIO)?;
    if let Some(w) = scenario.fault_bound_warning() {
        println!("warning: {w}");
    }
    let run = scenario.run()?;
    let dir = std::env::temp_dir().join("fairfactory-scenario-artifacts");
    run.write_artifacts(&dir)?;
    println!("artifacts in {}", dir.display());

    let sum = run.summary();
    println!(
        "committed {}/{}, mean latency {:.1} ms",
        sum.committed,
        sum.sent,
        sum.mean_latency_us.unwrap_or(0.0) / 1e3
    );

    let reloaded = Artifacts::load(&dir)?;
    let violations = reloaded.audit(&AuditChecks { gamma: Some(1.0), median: false });
    println!("{} γ-fairness violations", violations.len());
    for v in violations.iter().take(3) {
        println!("  {:?} owed precedence over {:?}: {}", v.pair.0, v.pair.1, v.evidence);
    }
    Ok(())
}
