//! The fair consensus factory: synchronize local views, then let every node
//! execute the ordering rule itself.

mod cluster;
mod pipeline;
mod replica;
mod rule;
mod sync;
mod view;

pub use cluster::{Cluster, ClusterConfig, ClusterError, RoundOutcome, RoundTrace, SimulationOutput, Timing};
pub use pipeline::{
    pipeline_round, pre_vote_latency, predicted_reduction, round_latency, round_period, stage_plan, RoundInputs,
    StageKind,
};
pub use replica::{Action, FairReplica, Input, NetMsg, ReplicaConfig, Stage, Timer};
pub use rule::{
    execute_rule, leaderless_round, validate_proposal, FairProposal, Justification, ProposalCheck, RoundError,
    RuleConfig, RuleError, RuleOutcome, SeedPolicy,
};
pub use sync::{
    detect_equivocation, synchronize, synchronize_sealed, EquivocationEvidence, SyncError, SynchronizedState,
};
pub use view::{view_set_digest, LocalView, Metadata, MetadataKind, SealedView};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Views to the leader, the leader orders, followers re-execute to verify.
    Original,
    /// Views all-to-all, everyone orders, votes carry the proposal digest.
    #[default]
    Optimized,
}
