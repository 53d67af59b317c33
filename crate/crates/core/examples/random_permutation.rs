//! Random ordering from shared randomness, checked for uniformity.

use std::collections::BTreeSet;

use fairfactory::audit::check_permutation_uniformity;
use fairfactory::ids::{Digest, MessageId};
use fairfactory::ordering::{pseudo_random_select, random_permute, SharedRandomness};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s: BTreeSet<MessageId> = (1..=5).map(MessageId::numbered).collect();

    // Every node holding the same seed derives the same order.
    let seed = SharedRandomness::from_digest(Digest::of(b"round 7 beacon"));
    println!("permutation: {:?}", random_permute(&s, &seed).flatten());
    println!("select 2:    {:?}", pseudo_random_select(&s, &seed, 2)?);

    let runs: Vec<Vec<MessageId>> = (0u64..10_000)
        .map(|i| random_permute(&s, &SharedRandomness::from_digest(Digest::of(&i.to_be_bytes()))).flatten())
        .collect();
    let report = check_permutation_uniformity(&runs)?;
    println!(
        "{} runs: chi-square {:.1} on {} dof, p = {:.3}, worst pair deviation {:.4}",
        report.runs,
        report.chi_square.unwrap_or(f64::NAN),
        report.degrees_of_freedom.unwrap_or(0),
        report.p_value.unwrap_or(f64::NAN),
        report.max_pair_deviation()
    );
    println!("uniform at α=0.01 within ±0.03: {}", report.accepts(0.01, 0.03));
    Ok(())
}
