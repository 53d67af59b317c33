//! Deterministic ordering rules `r(S, D) → O`.
//!
//! Every rule is a pure function of the message set and its metadata. Wherever
//! a tie is possible it is broken by ascending [`MessageId`], so two honest
//! nodes holding the same inputs always agree on the output.
//!
//! [`MessageId`]: crate::ids::MessageId

mod blind;
mod median;
mod random;
mod ranked_pairs;
mod types;
mod voting;

pub use blind::{blind_reveal, blind_wrap, BlindEnvelope, BlindError};
pub use median::{fifo_via_timestamping, is_f_robust, median_timestamp, padded_times, robust_indices, TimestampOrder};
pub use random::{pseudo_random_select, random_permute, selection_value, shared_rng};
pub use ranked_pairs::{pairwise_majorities, ranked_pairs_order, Majority};
pub(crate) use types::ceil_frac;
pub use types::{
    Ballot, BallotReading, OrderedOutput, OrderingError, SharedRandomness, Timestamp, TimestampMap, VotingParams,
};
pub use voting::{build_precedence_graph, condense_cycles, fault_bound_voting, fifo_via_voting, PrecedenceGraph};
