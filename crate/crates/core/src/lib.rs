//! A workbench for fair message ordering on top of Byzantine fault-tolerant
//! consensus.
//!
//! Ordering rules live in [`ordering`]. [`factory`] turns a leader-based BFT
//! core ([`consensus`]) into a fair protocol by synchronizing local views and
//! executing a rule on every node. [`simnet`] is the deterministic
//! discrete-event network everything runs on, [`adversary`] supplies Byzantine
//! strategies, [`audit`] checks committed logs against ground truth, and
//! [`scenario`] wires it all into reproducible experiments.

pub mod adversary;
pub mod audit;
pub mod consensus;
pub mod factory;
pub mod ids;
pub mod ordering;
pub mod scenario;
pub mod simnet;
