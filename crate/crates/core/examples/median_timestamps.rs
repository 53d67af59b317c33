//! Median-timestamp ordering: three nodes report when they saw two messages,
//! and the median decides. One dishonest reporter can flip a close pair but
//! not a robust one.

use fairfactory::adversary::median_swap;
use fairfactory::ids::{MessageId, NodeId};
use fairfactory::ordering::{
    fifo_via_timestamping, is_f_robust, padded_times, robust_indices, Timestamp, TimestampMap,
};

fn hm(h: u64, m: u64) -> Timestamp {
    Timestamp(h * 60 + m)
}

fn show(t: Timestamp) -> String {
    format!("{}:{:02}", t.0 / 60, t.0 % 60)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (m1, m2) = (MessageId::numbered(1), MessageId::numbered(2));
    let honest = vec![
        TimestampMap::new(NodeId(0), [(m1, hm(3, 0)), (m2, hm(3, 1))]),
        TimestampMap::new(NodeId(1), [(m1, hm(3, 2)), (m2, hm(3, 3))]),
        TimestampMap::new(NodeId(2), [(m1, hm(3, 4)), (m2, hm(3, 5))]),
    ];
    let s = [m1, m2].into();
    let out = fifo_via_timestamping(&s, &honest, 1)?;
    println!("honest order {:?}", out.output.flatten());
    for (m, t) in &out.medians {
        println!("  median of {m:?} = {}", show(*t));
    }
    println!("  adjacent pairs robust? {:?}", out.robustness);

    // The median reporter swaps its two readings.
    let others = [honest[0].clone(), honest[2].clone()];
    let forged = median_swap(&honest[1], (m1, m2), Some(&others));
    let attacked = vec![honest[0].clone(), forged, honest[2].clone()];
    println!("after median_swap by node 1: {:?}", fifo_via_timestamping(&s, &attacked, 1)?.output.flatten());

    // A pair is f-robust when the (⌊n/2⌋+f+1)-th reading of one still precedes
    // the (⌈n/2⌉−f)-th reading of the other.
    let (hi, lo) = robust_indices(4, 1)?;
    println!("n=4, f=1 compares order statistics {hi} and {lo}");
    let far_a: Vec<Timestamp> = [1, 2, 3, 4].map(Timestamp).into();
    let far_b: Vec<Timestamp> = [5, 6, 7, 8].map(Timestamp).into();
    println!("  {{1,2,3,4}} vs {{5,6,7,8}} robust: {}", is_f_robust(&far_a, &far_b, 4, 1)?);
    let near_b: Vec<Timestamp> = [3, 6, 7, 8].map(Timestamp).into();
    println!("  {{1,2,3,4}} vs {{3,6,7,8}} robust: {}", is_f_robust(&far_a, &near_b, 4, 1)?);

    // A node that never saw a message reports nothing, which counts as infinitely late.
    let partial = vec![honest[0].clone(), TimestampMap::new(NodeId(1), [(m1, hm(3, 2))]), honest[2].clone()];
    let padded: Vec<String> =
        padded_times(&m2, &partial).into_iter().map(|t| if t.is_infinite() { "∞".into() } else { show(t) }).collect();
    println!("m2 readings with node 1 silent: {padded:?}");
    Ok(())
}
