//! Local rule execution: every node applies the ordering rule to the
//! synchronized state itself.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sync::{synchronize, SyncError, SynchronizedState};
use super::view::{view_set_digest, LocalView, Metadata, MetadataKind};
use crate::consensus::{Justify, Proposal, Round};
use crate::ids::{Digest, DigestBuilder, MessageId, NodeId};
use crate::ordering::{
    fault_bound_voting, fifo_via_timestamping, fifo_via_voting, random_permute, ranked_pairs_order, Ballot,
    BallotReading, OrderedOutput, OrderingError, SharedRandomness, TimestampMap, VotingParams,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// The parent decision's digest.
    #[default]
    Parent,
    /// A digest over every contributor's randomness contribution.
    Contributions,
}

fn arrival_prefix() -> BallotReading {
    BallotReading::ArrivalPrefix
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleConfig {
    FifoVoting {
        gamma: f64,
        #[serde(default = "arrival_prefix")]
        reading: BallotReading,
    },
    RankedPairs,
    FifoTimestamping,
    Random {
        #[serde(default)]
        seed: SeedPolicy,
    },
}

impl RuleConfig {
    pub fn fifo_voting(gamma: f64) -> Self {
        RuleConfig::FifoVoting { gamma, reading: BallotReading::ArrivalPrefix }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RuleConfig::FifoVoting { .. } => "fifo_voting",
            RuleConfig::RankedPairs => "ranked_pairs",
            RuleConfig::FifoTimestamping => "fifo_timestamping",
            RuleConfig::Random { .. } => "random",
        }
    }

    pub fn metadata_kind(&self) -> MetadataKind {
        match self {
            RuleConfig::FifoVoting { .. } | RuleConfig::RankedPairs => MetadataKind::Ballot,
            RuleConfig::FifoTimestamping => MetadataKind::Timestamps,
            RuleConfig::Random { .. } => MetadataKind::Randomness,
        }
    }

    /// Smallest node count at which the rule's fairness guarantee holds with `f` faults.
    pub fn fault_bound(&self, f: usize) -> Result<usize, OrderingError> {
        match *self {
            RuleConfig::FifoVoting { gamma, .. } => fault_bound_voting(gamma, f),
            RuleConfig::FifoTimestamping => Ok(2 * f + 1),
            RuleConfig::RankedPairs | RuleConfig::Random { .. } => Ok(3 * f + 1),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("rule {rule} needs {expected:?} metadata but {node} supplied {found:?}")]
    MetadataMismatch { rule: &'static str, node: NodeId, expected: MetadataKind, found: MetadataKind },
    #[error(transparent)]
    Ordering(#[from] OrderingError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoundError {
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleOutcome {
    pub output: OrderedOutput,
    /// Messages of `S` held back for a later round; they stay pooled.
    pub deferred: BTreeSet<MessageId>,
}

fn ballots(s: &SynchronizedState) -> Vec<Ballot> {
    s.metadata_bundle
        .iter()
        .filter_map(|v| match &v.metadata {
            Metadata::Ballot(b) => Some(b.clone()),
            _ => None,
        })
        .collect()
}

fn timestamps(s: &SynchronizedState) -> Vec<TimestampMap> {
    s.metadata_bundle
        .iter()
        .filter_map(|v| match &v.metadata {
            Metadata::Timestamps(t) => Some(t.clone()),
            _ => None,
        })
        .collect()
}

/// Messages of `s` that an unseen or pending message could still be owed
/// precedence over.
///
/// A ballot supports "x before y" unless it ranks y ahead of x or holds y but
/// not x; non-contributors support everything. Whenever a message outside the
/// ordered set reaches the quorum against `y`, `y` waits. Deferred messages
/// block others in turn, up to a fixpoint.
fn settle_voting(
    s: &BTreeSet<MessageId>,
    pending: &BTreeSet<MessageId>,
    ballots: &[Ballot],
    params: &VotingParams,
) -> BTreeSet<MessageId> {
    let q = params.quorum().max(1);
    let absent = params.nodes.saturating_sub(ballots.len());
    let positions: Vec<HashMap<MessageId, usize>> = ballots.iter().map(Ballot::positions).collect();
    let potential = |x: &MessageId, y: &MessageId| {
        absent
            + positions
                .iter()
                .filter(|p| match (p.get(x), p.get(y)) {
                    (Some(px), Some(py)) => px < py,
                    (Some(_), None) | (None, None) => true,
                    (None, Some(_)) => false,
                })
                .count()
    };
    let mut deferred: BTreeSet<MessageId> =
        s.iter().filter(|y| absent + positions.iter().filter(|p| !p.contains_key(y)).count() >= q).copied().collect();
    let mut blockers: Vec<MessageId> = pending.iter().chain(deferred.iter()).copied().collect();
    while let Some(x) = blockers.pop() {
        for y in s {
            if !deferred.contains(y) && potential(&x, y) >= q {
                deferred.insert(*y);
                blockers.push(*y);
            }
        }
    }
    deferred
}

fn contribution_seed(s: &SynchronizedState) -> SharedRandomness {
    let mut b = DigestBuilder::new("randomness-contributions");
    for v in &s.metadata_bundle {
        if let Metadata::Randomness(d) = &v.metadata {
            b.u64(v.node.0 as u64).digest(d);
        }
    }
    SharedRandomness::from_digest(b.finish())
}

/// Apply `rule` to `s`. `parent` is the digest of the previous decision.
pub fn execute_rule(s: &SynchronizedState, rule: &RuleConfig, parent: &Digest) -> Result<RuleOutcome, RuleError> {
    let expected = rule.metadata_kind();
    if let Some(v) = s.metadata_bundle.iter().find(|v| v.metadata.kind() != expected) {
        return Err(RuleError::MetadataMismatch {
            rule: rule.name(),
            node: v.node,
            expected,
            found: v.metadata.kind(),
        });
    }
    let mut deferred = BTreeSet::new();
    let output = match *rule {
        RuleConfig::FifoVoting { gamma, reading } => {
            let params = VotingParams::new(gamma, s.nodes, s.faults).with_reading(reading);
            params.check()?;
            let all = ballots(s);
            if reading == BallotReading::ArrivalPrefix {
                deferred = settle_voting(&s.message_set, &s.pending(), &all, &params);
            }
            let keep: BTreeSet<MessageId> = s.message_set.difference(&deferred).copied().collect();
            let restricted: Vec<Ballot> = all.iter().map(|b| b.restricted_to(&keep)).collect();
            fifo_via_voting(&keep, &restricted, &params)?
        }
        RuleConfig::RankedPairs => {
            let restricted: Vec<Ballot> = ballots(s).iter().map(|b| b.restricted_to(&s.message_set)).collect();
            ranked_pairs_order(&s.message_set, &restricted)?
        }
        RuleConfig::FifoTimestamping => {
            let reports = timestamps(s);
            let required = reports.len().saturating_sub(s.faults).max(1);
            deferred = s
                .message_set
                .iter()
                .filter(|m| reports.iter().filter(|r| r.get(m).is_some()).count() < required)
                .copied()
                .collect();
            let keep: BTreeSet<MessageId> = s.message_set.difference(&deferred).copied().collect();
            fifo_via_timestamping(&keep, &reports, s.faults)?.output
        }
        RuleConfig::Random { seed } => {
            let r = match seed {
                SeedPolicy::Parent => SharedRandomness::from_digest(*parent),
                SeedPolicy::Contributions => contribution_seed(s),
            };
            random_permute(&s.message_set, &r)
        }
    };
    Ok(RuleOutcome { output, deferred })
}

/// What a proposal carries to justify its output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Justification {
    Omitted,
    /// Digest of the contributors' views.
    ViewSet(Digest),
    /// The contributors' views themselves, for recomputation.
    Bundle(Arc<Vec<LocalView>>),
}

impl Justify for Justification {
    fn justification_digest(&self) -> Option<Digest> {
        match self {
            Justification::Omitted => None,
            Justification::ViewSet(d) => Some(*d),
            Justification::Bundle(views) => Some(view_set_digest(views.iter())),
        }
    }
}

impl Justification {
    /// Same digest, without the payload.
    pub fn stripped(&self) -> Justification {
        match self.justification_digest() {
            Some(d) => Justification::ViewSet(d),
            None => Justification::Omitted,
        }
    }
}

pub type FairProposal = Proposal<Justification>;

/// How a follower checks a proposal.
pub enum ProposalCheck<'a> {
    /// Re-run the rule over the bundle in the justification.
    Recompute { rule: &'a RuleConfig, nodes: usize, faults: usize, excluded: &'a BTreeSet<NodeId> },
    /// Compare against the digest of the locally computed proposal.
    LocalDigest(Digest),
}

pub fn validate_proposal(p: &FairProposal, check: &ProposalCheck<'_>) -> bool {
    match check {
        ProposalCheck::LocalDigest(d) => p.digest() == Some(*d),
        ProposalCheck::Recompute { rule, nodes, faults, excluded } => {
            let Justification::Bundle(views) = &p.justification else { return false };
            let Ok(state) = synchronize(views, p.round, *nodes, *faults, excluded) else { return false };
            if state.view_set_digest() != view_set_digest(views.iter()) {
                return false;
            }
            matches!(execute_rule(&state, rule, &p.parent), Ok(o) if o.output == p.output)
        }
    }
}

/// The leaderless path: aggregate the views and apply the rule locally.
pub fn leaderless_round(
    views: &[LocalView],
    round: Round,
    nodes: usize,
    faults: usize,
    rule: &RuleConfig,
    parent: &Digest,
) -> Result<OrderedOutput, RoundError> {
    let state = synchronize(views, round, nodes, faults, &BTreeSet::new())?;
    Ok(execute_rule(&state, rule, parent)?.output)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::ordering::Timestamp;

    fn m(k: u64) -> MessageId {
        MessageId::numbered(k)
    }

    fn ballot_view(node: u32, ids: &[u64]) -> LocalView {
        let order: Vec<_> = ids.iter().map(|&k| m(k)).collect();
        LocalView {
            node: NodeId(node),
            round: 0,
            messages: order.iter().copied().collect(),
            metadata: Metadata::Ballot(Ballot::new(NodeId(node), order).unwrap()),
            reshared: BTreeMap::new(),
        }
    }

    fn state(views: &[LocalView], n: usize, f: usize) -> SynchronizedState {
        synchronize(views, 0, n, f, &BTreeSet::new()).unwrap()
    }

    #[test]
    fn unanimous_views_give_fifo() {
        let views: Vec<_> = (0..4).map(|i| ballot_view(i, &[3, 1, 2])).collect();
        let out = execute_rule(&state(&views, 4, 1), &RuleConfig::fifo_voting(1.0), &Digest::ZERO).unwrap();
        assert_eq!(out.output.flatten(), vec![m(3), m(1), m(2)]);
        assert!(out.output.is_total());
        assert!(out.deferred.is_empty());
    }

    #[test]
    fn partially_seen_message_defers_what_may_follow_it() {
        // m9 is held by one node, ahead of m2: too few holders to order, and
        // enough potential support that m2 must wait for it.
        let views =
            vec![ballot_view(0, &[1, 9, 2]), ballot_view(1, &[1]), ballot_view(2, &[1]), ballot_view(3, &[1, 2])];
        let s = state(&views, 4, 1);
        assert_eq!(s.message_set, [m(1), m(2)].into());
        let out = execute_rule(&s, &RuleConfig::fifo_voting(1.0), &Digest::ZERO).unwrap();
        assert_eq!(out.output.flatten(), vec![m(1)]);
        assert_eq!(out.deferred, [m(2)].into());
    }

    #[test]
    fn pairwise_reading_does_not_defer() {
        let views =
            vec![ballot_view(0, &[1, 9, 2]), ballot_view(1, &[1]), ballot_view(2, &[1, 2]), ballot_view(3, &[1, 2])];
        let rule = RuleConfig::FifoVoting { gamma: 1.0, reading: BallotReading::Pairwise };
        let out = execute_rule(&state(&views, 4, 1), &rule, &Digest::ZERO).unwrap();
        assert!(out.deferred.is_empty());
        assert_eq!(out.output.len(), 2);
    }

    #[test]
    fn random_rule_agrees_for_equal_seeds() {
        let views: Vec<_> = (0..4)
            .map(|i| {
                let mut v = ballot_view(i, &[1, 2, 3, 4, 5]);
                v.metadata = Metadata::Randomness(Digest::of(&[i as u8]));
                v
            })
            .collect();
        let s = state(&views, 4, 1);
        let rule = RuleConfig::Random { seed: SeedPolicy::Parent };
        let parent = Digest::of(b"parent");
        let a = execute_rule(&s, &rule, &parent).unwrap();
        assert_eq!(a, execute_rule(&s.clone(), &rule, &parent).unwrap());
        assert_eq!(a.output.len(), 5);
        let c = RuleConfig::Random { seed: SeedPolicy::Contributions };
        assert_eq!(execute_rule(&s, &c, &parent).unwrap(), execute_rule(&s, &c, &Digest::ZERO).unwrap());
    }

    #[test]
    fn reception_table_timestamps() {
        let hm = |h: u64, mm: u64| Timestamp(h * 60 + mm);
        let rows = [(hm(3, 0), hm(3, 1)), (hm(3, 2), hm(3, 3)), (hm(3, 4), hm(3, 5))];
        let views: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, (a, b))| LocalView {
                node: NodeId(i as u32),
                round: 0,
                messages: [m(1), m(2)].into(),
                metadata: Metadata::Timestamps(TimestampMap::new(NodeId(i as u32), [(m(1), *a), (m(2), *b)])),
                reshared: BTreeMap::new(),
            })
            .collect();
        let out = execute_rule(&state(&views, 3, 1), &RuleConfig::FifoTimestamping, &Digest::ZERO).unwrap();
        assert_eq!(out.output.flatten(), vec![m(1), m(2)]);
    }

    #[test]
    fn wrong_metadata_is_a_configuration_error() {
        let views: Vec<_> = (0..4).map(|i| ballot_view(i, &[1])).collect();
        let err = execute_rule(&state(&views, 4, 1), &RuleConfig::FifoTimestamping, &Digest::ZERO).unwrap_err();
        assert!(matches!(err, RuleError::MetadataMismatch { found: MetadataKind::Ballot, .. }));
    }

    fn bundle_proposal() -> (FairProposal, RuleConfig) {
        let views: Vec<_> = (0..4).map(|i| ballot_view(i, &[2, 1, 3])).collect();
        let rule = RuleConfig::fifo_voting(1.0);
        let out = execute_rule(&state(&views, 4, 1), &rule, &Digest::ZERO).unwrap().output;
        let p = Proposal {
            round: 0,
            output: out,
            justification: Justification::Bundle(Arc::new(views)),
            parent: Digest::ZERO,
        };
        (p, rule)
    }

    #[test]
    fn recomputation_accepts_honest_and_rejects_tampered() {
        let (p, rule) = bundle_proposal();
        let excluded = BTreeSet::new();
        let check = ProposalCheck::Recompute { rule: &rule, nodes: 4, faults: 1, excluded: &excluded };
        assert!(validate_proposal(&p, &check));
        let mut tampered = p.clone();
        let mut order = tampered.output.flatten();
        order.swap(0, 1);
        tampered.output = OrderedOutput::total(order);
        assert!(!validate_proposal(&tampered, &check));
        let mut bare = p.clone();
        bare.justification = Justification::Omitted;
        assert!(!validate_proposal(&bare, &check));
    }

    #[test]
    fn digest_check_matches_stripped_justification() {
        let (p, _) = bundle_proposal();
        let d = p.digest().unwrap();
        let mut stripped = p.clone();
        stripped.justification = p.justification.stripped();
        assert!(validate_proposal(&stripped, &ProposalCheck::LocalDigest(d)));
        assert!(!validate_proposal(&stripped, &ProposalCheck::LocalDigest(Digest::ZERO)));
    }

    #[test]
    fn leaderless_examples() {
        let rule = RuleConfig::fifo_voting(1.0);
        let same: Vec<_> = (0..4).map(|i| ballot_view(i, &[1, 2])).collect();
        assert_eq!(leaderless_round(&same, 0, 4, 1, &rule, &Digest::ZERO).unwrap().flatten(), vec![m(1), m(2)]);
        let suppressed =
            vec![ballot_view(0, &[1, 2]), ballot_view(1, &[1, 2]), ballot_view(2, &[1]), ballot_view(3, &[1])];
        let out = leaderless_round(&suppressed, 0, 4, 1, &RuleConfig::RankedPairs, &Digest::ZERO).unwrap();
        assert_eq!(out.flatten(), vec![m(1), m(2)]);
        let empty: Vec<_> = (0..4).map(|i| ballot_view(i, &[])).collect();
        assert!(leaderless_round(&empty, 0, 4, 1, &rule, &Digest::ZERO).unwrap().is_empty());
        assert!(matches!(leaderless_round(&same[..2], 0, 4, 1, &rule, &Digest::ZERO), Err(RoundError::Sync(_))));
    }

    #[test]
    fn rule_config_round_trips() {
        for rule in [
            RuleConfig::fifo_voting(0.75),
            RuleConfig::RankedPairs,
            RuleConfig::FifoTimestamping,
            RuleConfig::Random { seed: SeedPolicy::Contributions },
        ] {
            let text = serde_json::to_string(&rule).unwrap();
            assert_eq!(serde_json::from_str::<RuleConfig>(&text).unwrap(), rule);
        }
        assert!(serde_json::from_str::<RuleConfig>(r#"{"kind":"fifo_voting","gamma":1,"gama":1}"#).is_err());
    }
}
