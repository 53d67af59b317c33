//! A single-phase leader-based BFT core: propose, vote, commit with an explicit
//! quorum certificate. It agrees on an [`OrderedOutput`] per round and knows
//! nothing about how that output was derived.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{Digest, DigestBuilder, NodeId};
use crate::ordering::OrderedOutput;

pub type Round = u64;

pub fn leader_of(round: Round, n: usize) -> NodeId {
    NodeId((round % n as u64) as u32)
}

/// Votes needed for a certificate. Equals `2f + 1` when `n = 3f + 1`; for
/// larger `n` it grows so that any two certificates still share `f + 1` voters.
pub fn quorum_size(n: usize, f: usize) -> usize {
    (2 * f + 1).max((n + f + 1).div_ceil(2))
}

/// What a proposal carries besides its output.
pub trait Justify {
    /// Digest committed to by votes. `None` when the justification is missing.
    fn justification_digest(&self) -> Option<Digest>;
}

impl Justify for Digest {
    fn justification_digest(&self) -> Option<Digest> {
        Some(*self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proposal<J> {
    pub round: Round,
    pub output: OrderedOutput,
    pub justification: J,
    /// Digest of the previously committed decision.
    pub parent: Digest,
}

/// The digest a vote endorses: round, output, justification and parent.
pub fn proposal_digest(round: Round, output: &OrderedOutput, justification: &Digest, parent: &Digest) -> Digest {
    let mut b = DigestBuilder::new("proposal");
    b.u64(round).digest(&output.digest()).digest(justification).digest(parent);
    b.finish()
}

impl<J: Justify> Proposal<J> {
    pub fn digest(&self) -> Option<Digest> {
        let j = self.justification.justification_digest()?;
        Some(proposal_digest(self.round, &self.output, &j, &self.parent))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vote {
    pub round: Round,
    pub digest: Digest,
    pub voter: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumCertificate {
    pub round: Round,
    pub digest: Digest,
    pub voters: BTreeSet<NodeId>,
}

impl QuorumCertificate {
    pub fn is_valid(&self, n: usize, f: usize) -> bool {
        self.voters.len() >= quorum_size(n, f) && self.voters.iter().all(|v| v.index() < n)
    }

    pub fn shared_voters(&self, other: &QuorumCertificate) -> usize {
        self.voters.intersection(&other.voters).count()
    }
}

/// Whether two certificates of one round overlap in at least `f + 1` voters.
pub fn quorum_intersection_holds(a: &QuorumCertificate, b: &QuorumCertificate, f: usize) -> bool {
    a.round != b.round || a.shared_voters(b) > f
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub round: Round,
    pub output: OrderedOutput,
    pub digest: Digest,
    pub parent: Digest,
    pub qc: QuorumCertificate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecisionLog {
    committed: Vec<Decision>,
}

impl DecisionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Decision] {
        &self.committed
    }

    pub fn len(&self) -> usize {
        self.committed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.committed.is_empty()
    }

    /// Digest the next decision must name as parent.
    pub fn head(&self) -> Digest {
        self.committed.last().map_or(Digest::ZERO, |d| d.digest)
    }

    /// Append `d` if it extends the head. Returns whether it was appended.
    pub fn append(&mut self, d: Decision) -> bool {
        if d.parent != self.head() {
            return false;
        }
        self.committed.push(d);
        true
    }

    /// First index at which the two logs hold different decisions.
    pub fn first_conflict(&self, other: &DecisionLog) -> Option<usize> {
        self.committed.iter().zip(&other.committed).position(|(a, b)| a.digest != b.digest)
    }
}

pub enum CoreEvent<J> {
    /// The leader's own proposal for the current round; counts as its vote.
    Propose(Proposal<J>),
    /// A proposal received from the leader, after local validation.
    Proposal {
        proposal: Proposal<J>,
        valid: bool,
    },
    /// A locally computed digest to endorse without seeing a proposal.
    LocalDigest {
        round: Round,
        digest: Digest,
    },
    Vote(Vote),
    Commit {
        proposal: Proposal<J>,
        qc: QuorumCertificate,
    },
    Timeout(Round),
}

#[derive(Debug, PartialEq, Eq)]
pub enum CoreOutput<J> {
    SendVote {
        to: NodeId,
        vote: Vote,
    },
    /// A certificate formed here; broadcast it with its proposal.
    BroadcastCommit {
        proposal: Proposal<J>,
        qc: QuorumCertificate,
    },
    Committed(Decision),
    EnterRound(Round),
}

/// Per-replica agreement state. Malformed or out-of-place input is dropped.
pub struct ConsensusCore<J> {
    me: NodeId,
    n: usize,
    f: usize,
    round: Round,
    voted: BTreeSet<Round>,
    own: BTreeMap<Round, (Proposal<J>, Digest)>,
    votes: BTreeMap<Round, BTreeMap<NodeId, Digest>>,
    certified: BTreeSet<Round>,
    waiting: BTreeMap<Digest, Vec<(Proposal<J>, QuorumCertificate)>>,
    log: DecisionLog,
}

impl<J: Justify + Clone> ConsensusCore<J> {
    pub fn new(me: NodeId, n: usize, f: usize) -> Self {
        ConsensusCore {
            me,
            n,
            f,
            round: 0,
            voted: BTreeSet::new(),
            own: BTreeMap::new(),
            votes: BTreeMap::new(),
            certified: BTreeSet::new(),
            waiting: BTreeMap::new(),
            log: DecisionLog::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.me
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn leader(&self) -> NodeId {
        leader_of(self.round, self.n)
    }

    pub fn log(&self) -> &DecisionLog {
        &self.log
    }

    pub fn step(&mut self, event: CoreEvent<J>) -> Vec<CoreOutput<J>> {
        let mut out = Vec::new();
        match event {
            CoreEvent::Propose(p) => {
                if p.round == self.round && leader_of(p.round, self.n) == self.me && p.parent == self.log.head() {
                    if let Some(d) = p.digest() {
                        if self.voted.insert(p.round) {
                            self.own.insert(p.round, (p, d));
                            self.votes.entry(self.round).or_default().insert(self.me, d);
                            self.try_certify(self.round, &mut out);
                        }
                    }
                }
            }
            CoreEvent::Proposal { proposal, valid } => {
                if valid && proposal.parent == self.log.head() {
                    if let Some(d) = proposal.digest() {
                        self.vote(proposal.round, d, &mut out);
                    }
                }
            }
            CoreEvent::LocalDigest { round, digest } => self.vote(round, digest, &mut out),
            CoreEvent::Vote(v) => {
                if leader_of(v.round, self.n) == self.me && v.round >= self.round && v.voter.index() < self.n {
                    self.votes.entry(v.round).or_default().entry(v.voter).or_insert(v.digest);
                    self.try_certify(v.round, &mut out);
                }
            }
            CoreEvent::Commit { proposal, qc } => self.accept_commit(proposal, qc, &mut out),
            CoreEvent::Timeout(r) => {
                if r == self.round {
                    self.enter(r + 1, &mut out);
                }
            }
        }
        out
    }

    fn vote(&mut self, round: Round, digest: Digest, out: &mut Vec<CoreOutput<J>>) {
        if round == self.round && self.voted.insert(round) {
            let vote = Vote { round, digest, voter: self.me };
            out.push(CoreOutput::SendVote { to: leader_of(round, self.n), vote });
        }
    }

    fn try_certify(&mut self, round: Round, out: &mut Vec<CoreOutput<J>>) {
        let Some((proposal, digest)) = self.own.get(&round) else { return };
        if self.certified.contains(&round) {
            return;
        }
        let voters: BTreeSet<NodeId> =
            self.votes.get(&round).into_iter().flatten().filter(|(_, d)| *d == digest).map(|(v, _)| *v).collect();
        if voters.len() < quorum_size(self.n, self.f) {
            return;
        }
        self.certified.insert(round);
        let qc = QuorumCertificate { round, digest: *digest, voters };
        let proposal = proposal.clone();
        out.push(CoreOutput::BroadcastCommit { proposal: proposal.clone(), qc: qc.clone() });
        self.accept_commit(proposal, qc, out);
    }

    fn accept_commit(&mut self, proposal: Proposal<J>, qc: QuorumCertificate, out: &mut Vec<CoreOutput<J>>) {
        let Some(digest) = proposal.digest() else { return };
        if qc.round != proposal.round || qc.digest != digest || !qc.is_valid(self.n, self.f) {
            return;
        }
        if self.log.entries().iter().any(|d| d.digest == digest) {
            return;
        }
        if proposal.parent != self.log.head() {
            self.waiting.entry(proposal.parent).or_default().push((proposal, qc));
            return;
        }
        let decision = Decision { round: proposal.round, output: proposal.output, digest, parent: proposal.parent, qc };
        let next = decision.round + 1;
        self.log.append(decision.clone());
        out.push(CoreOutput::Committed(decision));
        if next > self.round {
            self.enter(next, out);
        }
        if let Some(children) = self.waiting.remove(&digest) {
            for (p, qc) in children {
                self.accept_commit(p, qc, out);
            }
        }
    }

    fn enter(&mut self, round: Round, out: &mut Vec<CoreOutput<J>>) {
        self.round = round;
        self.own.retain(|r, _| *r >= round);
        self.votes.retain(|r, _| *r >= round);
        out.push(CoreOutput::EnterRound(round));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::MessageId;

    fn proposal(round: Round, parent: Digest) -> Proposal<Digest> {
        Proposal {
            round,
            output: OrderedOutput::total(vec![MessageId::numbered(round)]),
            justification: Digest::of(b"views"),
            parent,
        }
    }

    #[test]
    fn quorum_sizes() {
        assert_eq!(quorum_size(4, 1), 3);
        assert_eq!(quorum_size(7, 2), 5);
        assert_eq!(quorum_size(20, 6), 14);
        assert_eq!(quorum_size(1, 0), 1);
    }

    #[test]
    fn follower_votes_once_for_valid_proposal() {
        let mut core = ConsensusCore::new(NodeId(1), 4, 1);
        let p = proposal(0, Digest::ZERO);
        let d = p.digest().unwrap();
        let out = core.step(CoreEvent::Proposal { proposal: p.clone(), valid: true });
        assert_eq!(
            out,
            vec![CoreOutput::SendVote { to: NodeId(0), vote: Vote { round: 0, digest: d, voter: NodeId(1) } }]
        );
        assert!(core.step(CoreEvent::Proposal { proposal: p, valid: true }).is_empty());
    }

    #[test]
    fn invalid_proposal_gets_no_vote() {
        let mut core = ConsensusCore::new(NodeId(1), 4, 1);
        assert!(core.step(CoreEvent::Proposal { proposal: proposal(0, Digest::ZERO), valid: false }).is_empty());
    }

    #[test]
    fn leader_commits_on_third_vote() {
        let mut core = ConsensusCore::new(NodeId(0), 4, 1);
        let p = proposal(0, Digest::ZERO);
        let d = p.digest().unwrap();
        assert!(core.step(CoreEvent::Propose(p)).is_empty());
        assert!(core.step(CoreEvent::Vote(Vote { round: 0, digest: d, voter: NodeId(1) })).is_empty());
        // A vote for a different digest does not count.
        let stray = Vote { round: 0, digest: Digest::of(b"other"), voter: NodeId(3) };
        assert!(core.step(CoreEvent::Vote(stray)).is_empty());
        let out = core.step(CoreEvent::Vote(Vote { round: 0, digest: d, voter: NodeId(2) }));
        match &out[0] {
            CoreOutput::BroadcastCommit { qc, .. } => assert_eq!(qc.voters.len(), 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(out[1], CoreOutput::Committed(_)));
        assert_eq!(out[2], CoreOutput::EnterRound(1));
        assert_eq!(core.log().len(), 1);
    }

    #[test]
    fn commit_without_quorum_is_dropped() {
        let mut core = ConsensusCore::new(NodeId(2), 4, 1);
        let p = proposal(0, Digest::ZERO);
        let qc = QuorumCertificate { round: 0, digest: p.digest().unwrap(), voters: [NodeId(0), NodeId(1)].into() };
        assert!(core.step(CoreEvent::Commit { proposal: p, qc }).is_empty());
        assert!(core.log().is_empty());
    }

    #[test]
    fn out_of_order_commits_are_chained() {
        let mut core = ConsensusCore::new(NodeId(3), 4, 1);
        let p0 = proposal(0, Digest::ZERO);
        let d0 = p0.digest().unwrap();
        let p1 = proposal(1, d0);
        let qc = |p: &Proposal<Digest>| QuorumCertificate {
            round: p.round,
            digest: p.digest().unwrap(),
            voters: [NodeId(0), NodeId(1), NodeId(2)].into(),
        };
        let (q0, q1) = (qc(&p0), qc(&p1));
        assert!(core.step(CoreEvent::Commit { proposal: p1, qc: q1 }).is_empty());
        core.step(CoreEvent::Commit { proposal: p0, qc: q0 });
        assert_eq!(core.log().len(), 2);
        assert_eq!(core.round(), 2);
    }

    #[test]
    fn timeout_rotates_leader() {
        let mut core: ConsensusCore<Digest> = ConsensusCore::new(NodeId(1), 4, 1);
        assert_eq!(core.step(CoreEvent::Timeout(0)), vec![CoreOutput::EnterRound(1)]);
        assert_eq!(core.leader(), NodeId(1));
        assert!(core.step(CoreEvent::Timeout(0)).is_empty());
    }

    #[test]
    fn intersection_of_quorums() {
        let a = QuorumCertificate { round: 0, digest: Digest::ZERO, voters: (0..3).map(NodeId).collect() };
        let b = QuorumCertificate { round: 0, digest: Digest::ZERO, voters: (1..4).map(NodeId).collect() };
        assert!(quorum_intersection_holds(&a, &b, 1));
        let c = QuorumCertificate { round: 0, digest: Digest::ZERO, voters: [NodeId(3), NodeId(4), NodeId(5)].into() };
        assert!(!quorum_intersection_holds(&a, &c, 1));
    }
}
