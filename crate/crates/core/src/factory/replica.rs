//! One fair replica: pool, local views, rule execution and the consensus core,
//! driven by simulator inputs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::rule::{execute_rule, validate_proposal, FairProposal, Justification, ProposalCheck, RuleConfig};
use super::sync::{synchronize_sealed, EquivocationEvidence};
use super::view::{LocalView, Metadata, MetadataKind, SealedView};
use super::Mode;
use crate::adversary::{equivocate_views, forge_ballot, invert_timestamps, median_swap, suppress, Behavior};
use crate::consensus::{leader_of, ConsensusCore, CoreEvent, CoreOutput, Decision, QuorumCertificate, Round, Vote};
use crate::ids::{Digest, DigestBuilder, MessageId, NodeId};
use crate::ordering::{Ballot, Timestamp, TimestampMap};
use crate::simnet::{Micros, ReceptionLog};

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaConfig {
    pub nodes: usize,
    pub faults: usize,
    pub mode: Mode,
    pub rule: RuleConfig,
    pub ordering_delay_us: Micros,
    pub sync_timeout_us: Micros,
    pub round_timeout_us: Micros,
    /// Forward client messages to every peer on first receipt from a client.
    pub relay: bool,
    /// Seed of this run's randomness contributions.
    pub secret: u64,
}

#[derive(Clone, Debug)]
pub enum NetMsg {
    Relay(MessageId),
    View(Arc<SealedView>),
    Proposal(Arc<FairProposal>),
    Vote(Vote),
    Commit(Arc<(FairProposal, QuorumCertificate)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timer {
    SyncDeadline(Round),
    Executed(Round),
    Validated(Round),
    RoundTimeout(Round),
}

#[derive(Clone, Debug)]
pub enum Input {
    Start,
    Client(MessageId),
    Net { from: NodeId, msg: NetMsg },
    Timer(Timer),
}

/// Round milestones, in pipeline order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RoundStart,
    Synced,
    Executed,
    Validated,
    Certified,
    Applied,
    TimedOut,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::RoundStart => "round_start",
            Stage::Synced => "synced",
            Stage::Executed => "executed",
            Stage::Validated => "validated",
            Stage::Certified => "certified",
            Stage::Applied => "applied",
            Stage::TimedOut => "timed_out",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Action {
    Send { to: NodeId, msg: NetMsg },
    SetTimer { after: Micros, timer: Timer },
    Mark { round: Round, stage: Stage },
    Certified(QuorumCertificate),
    Committed(Decision),
    Evidence(EquivocationEvidence),
}

struct RoundWork {
    round: Round,
    synced: bool,
    deadline_passed: bool,
    validating: bool,
    computed: Option<FairProposal>,
}

pub struct FairReplica {
    id: NodeId,
    cfg: ReplicaConfig,
    behavior: Behavior,
    core: ConsensusCore<Justification>,
    pool: BTreeMap<MessageId, Micros>,
    committed: HashSet<MessageId>,
    inbox: BTreeMap<Round, BTreeMap<NodeId, Arc<SealedView>>>,
    received: BTreeMap<Round, BTreeMap<NodeId, Digest>>,
    proposals: BTreeMap<Round, Arc<FairProposal>>,
    excluded: BTreeSet<NodeId>,
    work: Option<RoundWork>,
}

impl FairReplica {
    pub fn new(id: NodeId, cfg: ReplicaConfig, behavior: Behavior) -> Self {
        FairReplica {
            id,
            core: ConsensusCore::new(id, cfg.nodes, cfg.faults),
            cfg,
            behavior,
            pool: BTreeMap::new(),
            committed: HashSet::new(),
            inbox: BTreeMap::new(),
            received: BTreeMap::new(),
            proposals: BTreeMap::new(),
            excluded: BTreeSet::new(),
            work: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn behavior(&self) -> &Behavior {
        &self.behavior
    }

    pub fn core(&self) -> &ConsensusCore<Justification> {
        &self.core
    }

    pub fn pool(&self) -> &BTreeMap<MessageId, Micros> {
        &self.pool
    }

    pub fn excluded(&self) -> &BTreeSet<NodeId> {
        &self.excluded
    }

    fn peers(&self) -> Vec<NodeId> {
        (0..self.cfg.nodes as u32).map(NodeId).filter(|p| *p != self.id).collect()
    }

    fn leader(&self, round: Round) -> NodeId {
        leader_of(round, self.cfg.nodes)
    }

    fn is_collector(&self, round: Round) -> bool {
        !matches!(self.behavior, Behavior::Equivocate)
            && (self.cfg.mode == Mode::Optimized || self.leader(round) == self.id)
    }

    fn current(&self) -> Option<Round> {
        self.work.as_ref().map(|w| w.round)
    }

    pub fn handle(&mut self, now: Micros, input: Input, log: &ReceptionLog) -> Vec<Action> {
        let mut out = Vec::new();
        match input {
            Input::Start => {
                if self.work.is_none() {
                    self.enter_round(0, now, log, &mut out);
                }
            }
            Input::Client(id) => self.receive(id, now, true, &mut out),
            Input::Net { from, msg } => match msg {
                NetMsg::Relay(id) => self.receive(id, now, false, &mut out),
                NetMsg::View(v) => self.on_view(from, v, &mut out),
                NetMsg::Proposal(p) => self.on_proposal(from, p, &mut out),
                NetMsg::Vote(v) => {
                    let outputs = self.core.step(CoreEvent::Vote(v));
                    self.apply(outputs, now, log, &mut out);
                }
                NetMsg::Commit(c) => {
                    let (proposal, qc) = (*c).clone();
                    let outputs = self.core.step(CoreEvent::Commit { proposal, qc });
                    self.apply(outputs, now, log, &mut out);
                }
            },
            Input::Timer(t) => self.on_timer(t, now, log, &mut out),
        }
        out
    }

    fn receive(&mut self, id: MessageId, now: Micros, from_client: bool, out: &mut Vec<Action>) {
        if self.committed.contains(&id) || self.pool.contains_key(&id) {
            return;
        }
        self.pool.insert(id, now);
        let hidden = matches!(&self.behavior, Behavior::Suppress(f) if f.matches(&id));
        if from_client && self.cfg.relay && !hidden {
            for to in self.peers() {
                out.push(Action::Send { to, msg: NetMsg::Relay(id) });
            }
        }
    }

    fn true_view(&self, round: Round, log: &ReceptionLog, now: Micros) -> LocalView {
        let messages: BTreeSet<MessageId> = self.pool.keys().copied().collect();
        let metadata = match self.cfg.rule.metadata_kind() {
            MetadataKind::Ballot => {
                let mut by_time: Vec<(Micros, MessageId)> = self.pool.iter().map(|(m, t)| (*t, *m)).collect();
                by_time.sort_unstable();
                let ballot =
                    Ballot::new(self.id, by_time.into_iter().map(|p| p.1).collect()).expect("pool ids are unique");
                Metadata::Ballot(match &self.behavior {
                    Behavior::BallotForge(policy) => forge_ballot(&ballot, *policy, self.secret_for(round)),
                    _ => ballot,
                })
            }
            MetadataKind::Timestamps => {
                let truth = TimestampMap::new(self.id, self.pool.iter().map(|(m, t)| (*m, Timestamp(*t))));
                Metadata::Timestamps(match &self.behavior {
                    Behavior::MedianSwap { target: Some(pair), oracle } => {
                        let others: Option<Vec<TimestampMap>> =
                            oracle.then(|| self.oracle_reports(log, now, &messages));
                        median_swap(&truth, *pair, others.as_deref())
                    }
                    Behavior::MedianSwap { target: None, .. } => invert_timestamps(&truth),
                    _ => truth,
                })
            }
            MetadataKind::Randomness => {
                let mut b = DigestBuilder::new("randomness-contribution");
                b.u64(self.cfg.secret).u64(self.id.0 as u64).u64(round);
                Metadata::Randomness(b.finish())
            }
        };
        let reshared = round.checked_sub(1).and_then(|r| self.received.get(&r)).cloned().unwrap_or_default();
        let view = LocalView { node: self.id, round, messages, metadata, reshared };
        match &self.behavior {
            Behavior::Suppress(filter) => suppress(&view, filter),
            _ => view,
        }
    }

    fn secret_for(&self, round: Round) -> u64 {
        self.cfg.secret ^ (round << 20) ^ self.id.0 as u64
    }

    // Other nodes' true readings of the messages in this view, as of now.
    fn oracle_reports(&self, log: &ReceptionLog, now: Micros, messages: &BTreeSet<MessageId>) -> Vec<TimestampMap> {
        self.peers()
            .into_iter()
            .map(|p| {
                let times =
                    messages.iter().filter_map(|m| log.arrival(p, m).filter(|t| *t <= now).map(|t| (*m, Timestamp(t))));
                TimestampMap::new(p, times)
            })
            .collect()
    }

    fn enter_round(&mut self, round: Round, now: Micros, log: &ReceptionLog, out: &mut Vec<Action>) {
        self.work = Some(RoundWork { round, synced: false, deadline_passed: false, validating: false, computed: None });
        self.inbox.retain(|r, _| *r + 1 >= round);
        self.received.retain(|r, _| *r + 2 >= round);
        self.proposals.retain(|r, _| *r >= round);
        out.push(Action::Mark { round, stage: Stage::RoundStart });

        let view = self.true_view(round, log, now);
        let leader = self.leader(round);
        match (self.cfg.mode, &self.behavior) {
            (Mode::Optimized, Behavior::Equivocate) => {
                for (to, v) in equivocate_views(&view, &self.peers()) {
                    out.push(Action::Send { to, msg: NetMsg::View(Arc::new(SealedView::new(v))) });
                }
            }
            (Mode::Optimized, _) => {
                let shared = Arc::new(SealedView::new(view));
                for to in self.peers() {
                    out.push(Action::Send { to, msg: NetMsg::View(shared.clone()) });
                }
                self.inbox.entry(round).or_default().insert(self.id, shared);
            }
            (Mode::Original, _) => {
                let shared = Arc::new(SealedView::new(view));
                if leader == self.id {
                    self.inbox.entry(round).or_default().insert(self.id, shared);
                } else {
                    out.push(Action::Send { to: leader, msg: NetMsg::View(shared) });
                }
            }
        }
        out.push(Action::SetTimer { after: self.cfg.round_timeout_us, timer: Timer::RoundTimeout(round) });
        if self.is_collector(round) {
            out.push(Action::SetTimer { after: self.cfg.sync_timeout_us, timer: Timer::SyncDeadline(round) });
            self.try_sync(out);
        }
        if self.proposals.contains_key(&round) {
            self.start_validation(out);
        }
    }

    fn on_view(&mut self, from: NodeId, v: Arc<SealedView>, out: &mut Vec<Action>) {
        if v.node != from || from.index() >= self.cfg.nodes {
            return;
        }
        self.received.entry(v.round).or_default().entry(from).or_insert_with(|| v.digest());
        self.inbox.entry(v.round).or_default().entry(from).or_insert(v.clone());
        if self.current() == Some(v.round) {
            self.try_sync(out);
        }
    }

    fn try_sync(&mut self, out: &mut Vec<Action>) {
        let Some(round) = self.current() else { return };
        let work = self.work.as_ref().expect("current round");
        if work.synced || !self.is_collector(round) {
            return;
        }
        let views: Vec<Arc<SealedView>> =
            self.inbox.get(&round).map(|m| m.values().cloned().collect()).unwrap_or_default();
        let complete = views.len() >= self.cfg.nodes;
        if !(complete || (work.deadline_passed && views.len() + self.cfg.faults >= self.cfg.nodes)) {
            return;
        }
        let Ok(state) =
            synchronize_sealed(views.iter().map(|v| &**v), round, self.cfg.nodes, self.cfg.faults, &self.excluded)
        else {
            return;
        };
        for e in &state.evidence {
            if !self.excluded.contains(&e.accused) {
                out.push(Action::Evidence(e.clone()));
            }
        }
        self.excluded = state.excluded.clone();
        let parent = self.core.log().head();
        let work = self.work.as_mut().expect("current round");
        work.synced = true;
        out.push(Action::Mark { round, stage: Stage::Synced });
        // A rule that cannot run on this state leaves the round to time out.
        let Ok(outcome) = execute_rule(&state, &self.cfg.rule, &parent) else { return };
        let justification = match self.cfg.mode {
            Mode::Original => Justification::Bundle(Arc::new(state.metadata_bundle)),
            Mode::Optimized => Justification::ViewSet(state.view_set_digest()),
        };
        work.computed = Some(FairProposal { round, output: outcome.output, justification, parent });
        out.push(Action::SetTimer { after: self.cfg.ordering_delay_us, timer: Timer::Executed(round) });
    }

    fn on_proposal(&mut self, from: NodeId, p: Arc<FairProposal>, out: &mut Vec<Action>) {
        if self.cfg.mode != Mode::Original || from != self.leader(p.round) || from == self.id {
            return;
        }
        if self.current().is_some_and(|r| p.round < r) {
            return;
        }
        self.proposals.entry(p.round).or_insert(p);
        self.start_validation(out);
    }

    fn start_validation(&mut self, out: &mut Vec<Action>) {
        let Some(work) = self.work.as_mut() else { return };
        if work.validating || !self.proposals.contains_key(&work.round) || matches!(self.behavior, Behavior::Equivocate)
        {
            return;
        }
        work.validating = true;
        out.push(Action::SetTimer { after: self.cfg.ordering_delay_us, timer: Timer::Validated(work.round) });
    }

    fn on_timer(&mut self, t: Timer, now: Micros, log: &ReceptionLog, out: &mut Vec<Action>) {
        let Some(current) = self.current() else { return };
        match t {
            Timer::SyncDeadline(r) if r == current => {
                self.work.as_mut().expect("current round").deadline_passed = true;
                self.try_sync(out);
            }
            Timer::Executed(r) if r == current => {
                let Some(p) = self.work.as_ref().and_then(|w| w.computed.clone()) else { return };
                out.push(Action::Mark { round: r, stage: Stage::Executed });
                let event = if self.leader(r) == self.id {
                    if self.cfg.mode == Mode::Original {
                        let shared = Arc::new(p.clone());
                        for to in self.peers() {
                            out.push(Action::Send { to, msg: NetMsg::Proposal(shared.clone()) });
                        }
                    }
                    CoreEvent::Propose(p)
                } else {
                    let Some(digest) = p.digest() else { return };
                    CoreEvent::LocalDigest { round: r, digest }
                };
                let outputs = self.core.step(event);
                self.apply(outputs, now, log, out);
            }
            Timer::Validated(r) if r == current => {
                let Some(p) = self.proposals.get(&r).cloned() else { return };
                let check = ProposalCheck::Recompute {
                    rule: &self.cfg.rule,
                    nodes: self.cfg.nodes,
                    faults: self.cfg.faults,
                    excluded: &self.excluded,
                };
                let valid = validate_proposal(&p, &check);
                out.push(Action::Mark { round: r, stage: Stage::Validated });
                let outputs = self.core.step(CoreEvent::Proposal { proposal: (*p).clone(), valid });
                self.apply(outputs, now, log, out);
            }
            Timer::RoundTimeout(r) if r == current => {
                out.push(Action::Mark { round: r, stage: Stage::TimedOut });
                let outputs = self.core.step(CoreEvent::Timeout(r));
                self.apply(outputs, now, log, out);
            }
            _ => {}
        }
    }

    fn apply(
        &mut self,
        outputs: Vec<CoreOutput<Justification>>,
        now: Micros,
        log: &ReceptionLog,
        out: &mut Vec<Action>,
    ) {
        for o in outputs {
            match o {
                CoreOutput::SendVote { to, vote } => {
                    if matches!(self.behavior, Behavior::Equivocate) {
                        continue;
                    }
                    if to == self.id {
                        let more = self.core.step(CoreEvent::Vote(vote));
                        self.apply(more, now, log, out);
                    } else {
                        out.push(Action::Send { to, msg: NetMsg::Vote(vote) });
                    }
                }
                CoreOutput::BroadcastCommit { proposal, qc } => {
                    let light = FairProposal { justification: proposal.justification.stripped(), ..proposal };
                    let shared = Arc::new((light, qc.clone()));
                    for to in self.peers() {
                        out.push(Action::Send { to, msg: NetMsg::Commit(shared.clone()) });
                    }
                    out.push(Action::Mark { round: qc.round, stage: Stage::Certified });
                    out.push(Action::Certified(qc));
                }
                CoreOutput::Committed(d) => {
                    for m in d.output.flatten() {
                        self.pool.remove(&m);
                        self.committed.insert(m);
                    }
                    out.push(Action::Mark { round: d.round, stage: Stage::Applied });
                    out.push(Action::Committed(d));
                }
                CoreOutput::EnterRound(r) => self.enter_round(r, now, log, out),
            }
        }
    }
}
