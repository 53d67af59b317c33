//! Stage accounting for the two pipelines, and single-round execution.

use serde::{Deserialize, Serialize};

use super::cluster::{Cluster, ClusterConfig, ClusterError, RoundTrace};
use super::Mode;
use crate::ids::{MessageId, NodeId};
use crate::simnet::{ClientSend, Micros};

/// One sequential step of a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// A message hop of one network delay.
    Hop,
    /// One ordering-rule execution. Concurrent executions count once.
    Execute,
}

/// Named stages of a round, in order. The last two hops are the vote and the
/// commit notification.
pub fn stage_plan(mode: Mode) -> Vec<(&'static str, StageKind)> {
    use StageKind::*;
    match mode {
        Mode::Original => vec![
            ("views_to_leader", Hop),
            ("leader_executes", Execute),
            ("proposal_with_metadata", Hop),
            ("followers_reexecute", Execute),
            ("vote", Hop),
            ("commit", Hop),
        ],
        Mode::Optimized => {
            vec![("views_all_to_all", Hop), ("all_execute", Execute), ("vote_with_digest", Hop), ("commit", Hop)]
        }
    }
}

fn sum(stages: &[(&str, StageKind)], d: f64, c: f64) -> f64 {
    stages.iter().map(|(_, k)| if *k == StageKind::Hop { d } else { c }).sum()
}

/// Time from round start to the first vote leaving a follower.
pub fn pre_vote_latency(mode: Mode, d: f64, c: f64) -> f64 {
    let plan = stage_plan(mode);
    sum(&plan[..plan.len() - 2], d, c)
}

/// Time from round start to the certificate at the leader.
pub fn round_latency(mode: Mode, d: f64, c: f64) -> f64 {
    let plan = stage_plan(mode);
    sum(&plan[..plan.len() - 1], d, c)
}

/// Time from round start until every node has the commit and can start the next round.
pub fn round_period(mode: Mode, d: f64, c: f64) -> f64 {
    sum(&stage_plan(mode), d, c)
}

/// Predicted relative latency reduction of the optimized pipeline. A message
/// waits on average half a period for its round and then a full round, so
/// both scale with the period.
pub fn predicted_reduction(d: f64, c: f64) -> f64 {
    1.0 - round_period(Mode::Optimized, d, c) / round_period(Mode::Original, d, c)
}

/// Round inputs: which node holds which message, and since when.
#[derive(Clone, Debug, Default)]
pub struct RoundInputs {
    pub receptions: Vec<(NodeId, MessageId, Micros)>,
    /// When round 0 starts. Must not precede any reception.
    pub start_us: Micros,
}

/// Run round 0 of a fresh cluster over `inputs` and return its trace.
pub fn pipeline_round(cfg: ClusterConfig, inputs: &RoundInputs) -> Result<RoundTrace, ClusterError> {
    let mut cluster = Cluster::starting_at(cfg, inputs.start_us)?;
    let sends: Vec<ClientSend> = inputs
        .receptions
        .iter()
        .map(|(node, id, at)| ClientSend { id: *id, sent_us: *at, deliveries: vec![(*node, *at)] })
        .collect();
    cluster.inject(&sends)?;
    let horizon = inputs.start_us + 2 * cluster.config().timing().round_timeout_us;
    cluster.run_until(horizon)?;
    let out = cluster.finish();
    Ok(out.trace(0).cloned().expect("round 0 always starts"))
}
