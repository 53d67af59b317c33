//! Replicas on the simulated network: the deterministic event loop that runs
//! both pipelines.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::replica::{Action, FairReplica, Input, ReplicaConfig, Stage};
use super::rule::RuleConfig;
use super::sync::EquivocationEvidence;
use super::Mode;
use crate::adversary::{AdversaryConfig, Behavior};
use crate::consensus::{leader_of, quorum_intersection_holds, Decision, DecisionLog, QuorumCertificate, Round};
use crate::ids::{MessageId, NodeId};
use crate::simnet::{stream_rng, ClientSend, Dissemination, EventQueue, LatencyModel, Micros, ReceptionLog, SimError};

/// Protocol timeouts derived from the latency model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub sync_timeout_us: Micros,
    pub round_timeout_us: Micros,
}

impl Timing {
    /// Sync waits three worst-case hops for stragglers; a round gets two rule
    /// executions, eight hops and the sync wait, plus slack.
    pub fn derive(latency: &LatencyModel, ordering_delay_us: Micros) -> Timing {
        let hop = latency.hop_bound_us();
        let sync_timeout_us = 3 * hop + 1_000;
        Timing { sync_timeout_us, round_timeout_us: 2 * ordering_delay_us + 8 * hop + sync_timeout_us + 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterConfig {
    pub nodes: usize,
    pub faults: usize,
    pub mode: Mode,
    pub rule: RuleConfig,
    pub ordering_delay_us: Micros,
    pub latency: LatencyModel,
    pub adversary: AdversaryConfig,
    pub dissemination: Dissemination,
    pub seed: u64,
}

impl ClusterConfig {
    pub fn new(nodes: usize, faults: usize, mode: Mode, rule: RuleConfig) -> Self {
        ClusterConfig {
            nodes,
            faults,
            mode,
            rule,
            ordering_delay_us: 100_000,
            latency: LatencyModel::default(),
            adversary: AdversaryConfig::honest(),
            dissemination: Dissemination::BroadcastToAll,
            seed: 0,
        }
    }

    pub fn timing(&self) -> Timing {
        Timing::derive(&self.latency, self.ordering_delay_us)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("nodes must be positive")]
    NoNodes,
    #[error("adversary: {0}")]
    Adversary(String),
    #[error("latency: {0}")]
    Latency(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    Committed,
    Failed,
    Unfinished,
}

/// Per-round stage times across honest nodes: first and last occurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundTrace {
    pub round: Round,
    pub leader: NodeId,
    pub mode: Mode,
    pub stages: BTreeMap<Stage, (Micros, Micros)>,
    pub evidence: Vec<EquivocationEvidence>,
    pub committed: Option<Decision>,
}

impl RoundTrace {
    pub fn first(&self, stage: Stage) -> Option<Micros> {
        self.stages.get(&stage).map(|s| s.0)
    }

    pub fn last(&self, stage: Stage) -> Option<Micros> {
        self.stages.get(&stage).map(|s| s.1)
    }

    /// Time the certificate formed, which is the commit point. Certificates
    /// assembled by a Byzantine leader are not observed, so such rounds count
    /// from the first honest node to apply the decision.
    pub fn commit_time(&self) -> Option<Micros> {
        self.first(Stage::Certified).or(self.first(Stage::Applied))
    }

    pub fn outcome(&self) -> RoundOutcome {
        if self.committed.is_some() {
            RoundOutcome::Committed
        } else if self.stages.contains_key(&Stage::TimedOut) {
            RoundOutcome::Failed
        } else {
            RoundOutcome::Unfinished
        }
    }
}

/// Everything a finished simulation leaves behind.
#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub nodes: usize,
    pub faults: usize,
    pub mode: Mode,
    pub honest: BTreeSet<NodeId>,
    pub log: ReceptionLog,
    pub decision_logs: BTreeMap<NodeId, DecisionLog>,
    pub traces: Vec<RoundTrace>,
    pub certificates: BTreeMap<Round, Vec<QuorumCertificate>>,
    pub excluded: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub end_us: Micros,
}

impl SimulationOutput {
    /// The longest honest log. Safety makes every other honest log a prefix.
    pub fn decisions(&self) -> &DecisionLog {
        self.decision_logs
            .iter()
            .filter(|(n, _)| self.honest.contains(n))
            .max_by_key(|(n, l)| (l.len(), std::cmp::Reverse(**n)))
            .map(|(_, l)| l)
            .expect("at least one honest node")
    }

    /// Pairs of honest nodes whose logs disagree at some index.
    pub fn divergences(&self) -> Vec<(NodeId, NodeId, usize)> {
        let honest: Vec<_> = self.decision_logs.iter().filter(|(n, _)| self.honest.contains(n)).collect();
        let mut out = Vec::new();
        for (i, (a, la)) in honest.iter().enumerate() {
            for (b, lb) in &honest[i + 1..] {
                if let Some(ix) = la.first_conflict(lb) {
                    out.push((**a, **b, ix));
                }
            }
        }
        out
    }

    /// Certificates that are under-sized or fail to intersect in `f + 1` voters.
    pub fn certificate_faults(&self) -> Vec<Round> {
        let mut bad = BTreeSet::new();
        for (round, qcs) in &self.certificates {
            for (i, a) in qcs.iter().enumerate() {
                if !a.is_valid(self.nodes, self.faults) {
                    bad.insert(*round);
                }
                for b in &qcs[i + 1..] {
                    if !quorum_intersection_holds(a, b, self.faults) || a.digest != b.digest {
                        bad.insert(*round);
                    }
                }
            }
        }
        bad.into_iter().collect()
    }

    /// Committed position `(round, batch)` of each message.
    pub fn positions(&self) -> BTreeMap<MessageId, (Round, usize)> {
        let mut out = BTreeMap::new();
        for d in self.decisions().entries() {
            for (b, batch) in d.output.batches().iter().enumerate() {
                for m in batch {
                    out.insert(*m, (d.round, b));
                }
            }
        }
        out
    }

    pub fn trace(&self, round: Round) -> Option<&RoundTrace> {
        self.traces.iter().find(|t| t.round == round)
    }
}

pub struct Cluster {
    cfg: ClusterConfig,
    queue: EventQueue<Input>,
    replicas: Vec<FairReplica>,
    honest: BTreeSet<NodeId>,
    log: ReceptionLog,
    net: ChaCha20Rng,
    traces: BTreeMap<Round, RoundTrace>,
    certificates: BTreeMap<Round, Vec<QuorumCertificate>>,
}

impl Cluster {
    pub fn new(cfg: ClusterConfig) -> Result<Self, ClusterError> {
        Self::starting_at(cfg, 0)
    }

    /// A cluster whose replicas enter round 0 at `start_us`.
    pub fn starting_at(cfg: ClusterConfig, start_us: Micros) -> Result<Self, ClusterError> {
        if cfg.nodes == 0 {
            return Err(ClusterError::NoNodes);
        }
        cfg.adversary.validate(cfg.nodes, cfg.faults).map_err(ClusterError::Adversary)?;
        cfg.latency.validate().map_err(ClusterError::Latency)?;
        let timing = cfg.timing();
        let rcfg = ReplicaConfig {
            nodes: cfg.nodes,
            faults: cfg.faults,
            mode: cfg.mode,
            rule: cfg.rule,
            ordering_delay_us: cfg.ordering_delay_us,
            sync_timeout_us: timing.sync_timeout_us,
            round_timeout_us: timing.round_timeout_us,
            relay: cfg.dissemination == Dissemination::OneToOne,
            secret: cfg.seed,
        };
        let replicas: Vec<FairReplica> = (0..cfg.nodes as u32)
            .map(NodeId)
            .map(|id| FairReplica::new(id, rcfg.clone(), Behavior::resolve(cfg.adversary.strategy(id), cfg.seed)))
            .collect();
        let mut queue = EventQueue::new();
        for r in &replicas {
            queue.schedule(start_us, r.id(), Input::Start)?;
        }
        Ok(Cluster {
            honest: cfg.adversary.honest_nodes(cfg.nodes),
            net: stream_rng(cfg.seed, 2),
            cfg,
            queue,
            replicas,
            log: ReceptionLog::new(),
            traces: BTreeMap::new(),
            certificates: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn now(&self) -> Micros {
        self.queue.now()
    }

    pub fn replicas(&self) -> &[FairReplica] {
        &self.replicas
    }

    pub fn log(&self) -> &ReceptionLog {
        &self.log
    }

    /// Schedule client deliveries and record their send times.
    pub fn inject(&mut self, sends: &[ClientSend]) -> Result<(), ClusterError> {
        for s in sends {
            self.log.record_send(s.id, s.sent_us);
            for (node, at) in &s.deliveries {
                if node.index() < self.cfg.nodes {
                    self.queue.schedule(*at, *node, Input::Client(s.id))?;
                }
            }
        }
        Ok(())
    }

    /// Fire every event due at or before `t`.
    pub fn run_until(&mut self, t: Micros) -> Result<(), ClusterError> {
        while let Some(ev) = self.queue.pop_until(t) {
            self.dispatch(ev.time, ev.target, ev.payload)?;
        }
        self.queue.run_until(t);
        Ok(())
    }

    /// Run until every injected message is committed, or `limit`.
    pub fn run_until_settled(&mut self, limit: Micros) -> Result<(), ClusterError> {
        let step = self.cfg.timing().round_timeout_us.max(1);
        while self.now() < limit {
            let t = (self.now() + step).min(limit);
            self.run_until(t)?;
            let committed: BTreeSet<MessageId> = self.committed_ids();
            if self.log.sends().keys().all(|m| committed.contains(m)) {
                break;
            }
        }
        Ok(())
    }

    fn committed_ids(&self) -> BTreeSet<MessageId> {
        self.replicas
            .iter()
            .filter(|r| self.honest.contains(&r.id()))
            .max_by_key(|r| r.core().log().len())
            .map(|r| r.core().log().entries().iter().flat_map(|d| d.output.flatten()).collect())
            .unwrap_or_default()
    }

    fn dispatch(&mut self, now: Micros, target: NodeId, input: Input) -> Result<(), ClusterError> {
        if let Input::Client(id) = &input {
            if !self.log.record(target, *id, now) {
                return Ok(());
            }
        }
        if let Input::Net { msg: super::replica::NetMsg::Relay(id), .. } = &input {
            if !self.log.record(target, *id, now) {
                return Ok(());
            }
        }
        let actions = self.replicas[target.index()].handle(now, input, &self.log);
        let honest = self.honest.contains(&target);
        for a in actions {
            match a {
                Action::Send { to, msg } => {
                    let at = now + self.cfg.latency.sample(Some(target), to, &mut self.net);
                    self.queue.schedule(at, to, Input::Net { from: target, msg })?;
                }
                Action::SetTimer { after, timer } => {
                    self.queue.schedule(now + after, target, Input::Timer(timer))?;
                }
                Action::Mark { round, stage } => {
                    if honest {
                        let e = self.trace_mut(round).stages.entry(stage).or_insert((now, now));
                        e.0 = e.0.min(now);
                        e.1 = e.1.max(now);
                    }
                }
                Action::Certified(qc) => {
                    self.certificates.entry(qc.round).or_default().push(qc);
                }
                Action::Committed(d) => {
                    if honest {
                        let t = self.trace_mut(d.round);
                        if t.committed.is_none() {
                            t.committed = Some(d);
                        }
                    }
                }
                Action::Evidence(e) => {
                    if honest {
                        let t = self.trace_mut(e.round + 1);
                        if !t.evidence.iter().any(|x| x.accused == e.accused) {
                            t.evidence.push(e);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn trace_mut(&mut self, round: Round) -> &mut RoundTrace {
        let (n, mode) = (self.cfg.nodes, self.cfg.mode);
        self.traces.entry(round).or_insert_with(|| RoundTrace {
            round,
            leader: leader_of(round, n),
            mode,
            stages: BTreeMap::new(),
            evidence: Vec::new(),
            committed: None,
        })
    }

    pub fn finish(self) -> SimulationOutput {
        SimulationOutput {
            nodes: self.cfg.nodes,
            faults: self.cfg.faults,
            mode: self.cfg.mode,
            honest: self.honest,
            decision_logs: self.replicas.iter().map(|r| (r.id(), r.core().log().clone())).collect(),
            excluded: self.replicas.iter().map(|r| (r.id(), r.excluded().clone())).collect(),
            traces: self.traces.into_values().collect(),
            certificates: self.certificates,
            end_us: self.queue.now(),
            log: self.log,
        }
    }
}
