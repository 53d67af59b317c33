//! The two pipelines side by side: analytic stage accounting first, then a
//! short simulated sweep over node counts.

use fairfactory::factory::{predicted_reduction, round_latency, round_period, stage_plan, Mode, RuleConfig};
use fairfactory::scenario::{compare, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (d, c) = (5.5, 100.0);
    for mode in [Mode::Original, Mode::Optimized] {
        let stages: Vec<&str> = stage_plan(mode).iter().map(|s| s.0).collect();
        println!(
            "{mode:?}: {} | latency {:.1} ms, period {:.1} ms",
            stages.join(" → "),
            round_latency(mode, d, c),
            round_period(mode, d, c)
        );
    }
    println!("predicted reduction at d={d} ms, c={c} ms: {:.1}%", 100.0 * predicted_reduction(d, c));
    println!("with c=0 it shrinks to {:.1}%", 100.0 * predicted_reduction(d, 0.0));

    let mut base = Scenario::new(4, 1, Mode::Optimized, RuleConfig::fifo_voting(1.0));
    base.duration = 10.0;
    base.seed = 1;
    let cmp = compare(&base, &[4, 7, 10, 20], 1)?;
    println!("{:>5} {:>14} {:>14} {:>10} {:>12}", "nodes", "original ms", "optimized ms", "reduction", "tput delta");
    for r in &cmp.reductions {
        println!(
            "{:>5} {:>14.1} {:>14.1} {:>9.1}% {:>11.2}%",
            r.nodes,
            cmp.mean_latency(r.nodes, Mode::Original) / 1e3,
            cmp.mean_latency(r.nodes, Mode::Optimized) / 1e3,
            100.0 * r.mean,
            100.0 * r.throughput_delta
        );
    }
    Ok(())
}
