//! Scenario files, simulation runs, the node-count sweep, and on-disk artifacts.
//!
//! A run directory holds:
//!
//! | file | columns |
//! |---|---|
//! | `scenario.json` | the input scenario, normalized |
//! | `decisions.csv` | `round,batch,index,message_id,committed_us` |
//! | `reception_log.csv` | `node,message_id,arrival_us,sent_us` |
//! | `trace.csv` | `round,leader,stage,first_us,last_us` |
//! | `violations.csv` | `kind,first,second,evidence` |
//! | `perf.csv` | `message_id,round,sent_us,first_arrival_us,round_start_us,synced_us,executed_us,committed_us,latency_us` |
//! | `summary.json` | [`Summary`] |
//!
//! A sweep writes `comparison.csv` with columns
//! `nodes,mode,rep,mean_latency_us,median_latency_us,p99_latency_us,throughput`.
//! After the repetitions of each node count comes one row with mode
//! `reduction`. Its latency columns hold `1 − optimized/original` of the
//! per-mode averages, and its throughput column holds the relative throughput
//! difference.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{condorcet_forger, AdversaryConfig, ClientAttack, ForgeError};
use crate::audit::{check_gamma_fairness, check_median_robust, committed, perf_report, FairnessViolation, PerfReport};
use crate::consensus::Round;
use crate::factory::{Cluster, ClusterConfig, ClusterError, Mode, RuleConfig, SimulationOutput};
use crate::ids::{MessageId, NodeId};
use crate::ordering::OrderedOutput;
use crate::simnet::{generate_clients, ClientWorkload, LatencyModel, Micros, ReceptionLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub nodes: usize,
    pub faults: usize,
    pub rule: RuleConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub workload: ClientWorkload,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    /// Simulated seconds of client traffic.
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rule execution time in milliseconds.
    #[serde(default = "default_ordering_delay")]
    pub ordering_delay: f64,
}

fn default_duration() -> f64 {
    60.0
}

fn default_ordering_delay() -> f64 {
    100.0
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Parse(serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("condorcet_forger: {0}")]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed artifact {file}: {reason}")]
    Artifact { file: &'static str, reason: String },
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse(e)
    }
}

impl Scenario {
    pub fn new(nodes: usize, faults: usize, mode: Mode, rule: RuleConfig) -> Self {
        Scenario {
            nodes,
            faults,
            rule,
            mode,
            latency: LatencyModel::default(),
            workload: ClientWorkload::default(),
            adversary: AdversaryConfig::default(),
            duration: default_duration(),
            seed: 0,
            ordering_delay: default_ordering_delay(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.nodes == 0 {
            return bad("nodes: must be positive".into());
        }
        if self.faults >= self.nodes {
            return bad(format!("faults: {} leaves no honest node among {}", self.faults, self.nodes));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration: {} is not a positive number of seconds", self.duration));
        }
        if !(self.ordering_delay.is_finite() && self.ordering_delay >= 0.0) {
            return bad(format!("ordering_delay: {} is not a non-negative number of ms", self.ordering_delay));
        }
        if !(self.workload.rate.is_finite() && self.workload.rate >= 0.0) {
            return bad(format!("workload.rate: {} is not a non-negative rate", self.workload.rate));
        }
        if let Err(e) = self.rule.fault_bound(self.faults) {
            return bad(format!("rule: {e}"));
        }
        self.latency.validate().map_err(|e| ScenarioError::Invalid(format!("latency: {e}")))?;
        self.adversary
            .validate(self.nodes, self.faults)
            .map_err(|e| ScenarioError::Invalid(format!("adversary: {e}")))?;
        Ok(())
    }

    /// Set when `nodes` is below what the rule needs to tolerate `faults`.
    /// Such scenarios still run; they are how the bound's necessity is shown.
    pub fn fault_bound_warning(&self) -> Option<String> {
        let bound = self.rule.fault_bound(self.faults).ok()?;
        (self.nodes < bound).then(|| {
            format!(
                "{} needs {bound} nodes to tolerate {} faults, scenario has {}",
                self.rule.name(),
                self.faults,
                self.nodes
            )
        })
    }

    pub fn duration_us(&self) -> Micros {
        (self.duration * 1e6).round() as Micros
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        let mut cfg = ClusterConfig::new(self.nodes, self.faults, self.mode, self.rule);
        cfg.ordering_delay_us = (self.ordering_delay * 1e3).round() as Micros;
        cfg.latency = self.latency.clone();
        cfg.adversary = self.adversary.clone();
        cfg.dissemination = self.workload.dissemination;
        cfg.seed = self.seed;
        cfg
    }

    /// Run the simulation to completion, without auditing.
    pub fn simulate(&self) -> Result<Simulation, ScenarioError> {
        self.validate()?;
        let duration_us = self.duration_us();
        let mut sends = generate_clients(&self.workload, self.nodes, duration_us, &self.latency, self.seed);
        if let Some(ClientAttack::CondorcetForger { k, start_us, gap_us }) = &self.adversary.byzantine_clients {
            let nodes: Vec<NodeId> = (0..self.nodes as u32).map(NodeId).collect();
            sends.extend(condorcet_forger(*k, &nodes, &self.latency, *start_us, *gap_us, self.seed)?);
        }
        let cfg = self.cluster_config();
        let grace = 10 * cfg.timing().round_timeout_us;
        let mut cluster = Cluster::new(cfg)?;
        cluster.inject(&sends)?;
        cluster.run_until(duration_us)?;
        cluster.run_until_settled(duration_us + grace)?;
        let output = cluster.finish();
        let perf = perf_report(&output.traces, &output.log, duration_us);
        Ok(Simulation { sent: sends.len(), output, perf })
    }

    /// Simulate, then audit with the checks matching the rule.
    pub fn run(&self) -> Result<RunResult, ScenarioError> {
        let sim = self.simulate()?;
        let violations = audit_log(
            &sim.output.log,
            &committed(sim.output.decisions()),
            &AuditChecks::for_rule(&self.rule),
            self.nodes,
            self.faults,
            &sim.output.honest,
        );
        Ok(RunResult { scenario: self.clone(), sim, violations })
    }
}

pub struct Simulation {
    pub sent: usize,
    pub output: SimulationOutput,
    pub perf: PerfReport,
}

pub struct RunResult {
    pub scenario: Scenario,
    pub sim: Simulation,
    pub violations: Vec<FairnessViolation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub nodes: usize,
    pub faults: usize,
    pub mode: Mode,
    pub rule: String,
    pub duration_us: Micros,
    pub sent: usize,
    pub committed: usize,
    pub rounds: usize,
    pub rounds_committed: usize,
    pub rounds_failed: usize,
    pub mean_latency_us: Option<f64>,
    pub median_latency_us: Option<Micros>,
    pub p99_latency_us: Option<Micros>,
    pub throughput: f64,
    pub divergences: usize,
    pub certificate_faults: usize,
    pub excluded: BTreeSet<NodeId>,
    pub violations: BTreeMap<String, usize>,
    pub fault_bound_warning: Option<String>,
}

impl RunResult {
    pub fn summary(&self) -> Summary {
        let out = &self.sim.output;
        let perf = &self.sim.perf;
        let mut violations = BTreeMap::new();
        for v in &self.violations {
            *violations.entry(v.kind.name().to_string()).or_insert(0) += 1;
        }
        Summary {
            nodes: out.nodes,
            faults: out.faults,
            mode: out.mode,
            rule: self.scenario.rule.name().to_string(),
            duration_us: self.scenario.duration_us(),
            sent: self.sim.sent,
            committed: perf.committed,
            rounds: out.traces.len(),
            rounds_committed: perf.rounds_committed,
            rounds_failed: perf.rounds_failed,
            mean_latency_us: perf.mean_latency_us,
            median_latency_us: perf.median_latency_us,
            p99_latency_us: perf.p99_latency_us,
            throughput: perf.throughput,
            divergences: out.divergences().len(),
            certificate_faults: out.certificate_faults().len(),
            excluded: out
                .excluded
                .iter()
                .filter(|(n, _)| out.honest.contains(n))
                .flat_map(|(_, e)| e.iter().copied())
                .collect(),
            violations,
            fault_bound_warning: self.scenario.fault_bound_warning(),
        }
    }

    pub fn write_artifacts(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        let out = &self.sim.output;
        fs::write(dir.join("scenario.json"), self.scenario.to_json() + "\n")?;

        let mut w = csv::Writer::from_path(dir.join("decisions.csv"))?;
        w.write_record(["round", "batch", "index", "message_id", "committed_us"])?;
        for d in out.decisions().entries() {
            let at = out.trace(d.round).and_then(|t| t.commit_time()).map(|t| t.to_string()).unwrap_or_default();
            let mut index = 0usize;
            for (b, batch) in d.output.batches().iter().enumerate() {
                for m in batch {
                    w.write_record([d.round.to_string(), b.to_string(), index.to_string(), m.to_hex(), at.clone()])?;
                    index += 1;
                }
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("reception_log.csv"))?;
        w.write_record(["node", "message_id", "arrival_us", "sent_us"])?;
        for r in out.log.entries() {
            let sent = out.log.sent(&r.message).map(|t| t.to_string()).unwrap_or_default();
            w.write_record([r.node.0.to_string(), r.message.to_hex(), r.arrival_us.to_string(), sent])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        w.write_record(["round", "leader", "stage", "first_us", "last_us"])?;
        for t in &out.traces {
            for (stage, (first, last)) in &t.stages {
                w.write_record([
                    t.round.to_string(),
                    t.leader.0.to_string(),
                    stage.name().into(),
                    first.to_string(),
                    last.to_string(),
                ])?;
            }
        }
        w.flush()?;

        write_violations(&dir.join("violations.csv"), &self.violations)?;

        let mut w = csv::Writer::from_path(dir.join("perf.csv"))?;
        w.write_record([
            "message_id",
            "round",
            "sent_us",
            "first_arrival_us",
            "round_start_us",
            "synced_us",
            "executed_us",
            "committed_us",
            "latency_us",
        ])?;
        let mut accounts: Vec<_> = self.sim.perf.accounts.iter().collect();
        accounts.sort_by_key(|(m, a)| (a.round, **m));
        for (m, a) in accounts {
            w.write_record([
                m.to_hex(),
                a.round.to_string(),
                a.sent_us.to_string(),
                a.first_arrival_us.to_string(),
                a.round_start_us.to_string(),
                a.synced_us.to_string(),
                a.executed_us.to_string(),
                a.committed_us.to_string(),
                a.latency_us().to_string(),
            ])?;
        }
        w.flush()?;

        let summary = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        fs::write(dir.join("summary.json"), summary + "\n")?;
        Ok(())
    }
}

pub fn write_violations(path: &Path, violations: &[FairnessViolation]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "first", "second", "evidence"])?;
    for v in violations {
        w.write_record([v.kind.name(), &v.pair.0.to_hex(), &v.pair.1.to_hex(), &v.evidence])?;
    }
    w.flush()?;
    Ok(())
}

/// Which audits to run over a committed log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditChecks {
    pub gamma: Option<f64>,
    pub median: bool,
}

impl AuditChecks {
    pub fn for_rule(rule: &RuleConfig) -> Self {
        match *rule {
            RuleConfig::FifoVoting { gamma, .. } => AuditChecks { gamma: Some(gamma), median: false },
            RuleConfig::FifoTimestamping => AuditChecks { gamma: None, median: true },
            _ => AuditChecks::default(),
        }
    }
}

pub fn audit_log(
    log: &ReceptionLog,
    decisions: &[(Round, OrderedOutput)],
    checks: &AuditChecks,
    nodes: usize,
    faults: usize,
    honest: &BTreeSet<NodeId>,
) -> Vec<FairnessViolation> {
    let mut out = Vec::new();
    if let Some(gamma) = checks.gamma {
        out.extend(check_gamma_fairness(log, decisions, gamma, honest));
    }
    if checks.median {
        out.extend(check_median_robust(log, decisions, nodes, faults));
    }
    out
}

/// A run directory read back for auditing.
pub struct Artifacts {
    pub scenario: Scenario,
    pub log: ReceptionLog,
    pub decisions: Vec<(Round, OrderedOutput)>,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, file: &'static str) -> Result<T, ScenarioError> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ScenarioError::Artifact { file, reason: format!("bad column {i} in {rec:?}") })
}

fn id_field(rec: &csv::StringRecord, i: usize, file: &'static str) -> Result<MessageId, ScenarioError> {
    rec.get(i)
        .and_then(MessageId::from_hex)
        .ok_or_else(|| ScenarioError::Artifact { file, reason: format!("bad message id in {rec:?}") })
}

impl Artifacts {
    pub fn load(dir: &Path) -> Result<Self, ScenarioError> {
        let scenario = Scenario::load(&dir.join("scenario.json"))?;
        let mut log = ReceptionLog::new();
        for rec in csv::Reader::from_path(dir.join("reception_log.csv"))?.records() {
            let rec = rec?;
            let f = "reception_log.csv";
            let id = id_field(&rec, 1, f)?;
            if let Some(sent) = rec.get(3).filter(|s| !s.is_empty()) {
                let sent = sent
                    .parse()
                    .map_err(|_| ScenarioError::Artifact { file: f, reason: format!("bad sent_us in {rec:?}") })?;
                log.record_send(id, sent);
            }
            log.record(NodeId(field(&rec, 0, f)?), id, field(&rec, 2, f)?);
        }
        let mut rows: BTreeMap<Round, BTreeMap<usize, Vec<MessageId>>> = BTreeMap::new();
        for rec in csv::Reader::from_path(dir.join("decisions.csv"))?.records() {
            let rec = rec?;
            let f = "decisions.csv";
            rows.entry(field(&rec, 0, f)?)
                .or_default()
                .entry(field(&rec, 1, f)?)
                .or_default()
                .push(id_field(&rec, 3, f)?);
        }
        let decisions = rows
            .into_iter()
            .map(|(r, batches)| (r, OrderedOutput::from_batches(batches.into_values().collect())))
            .collect();
        Ok(Artifacts { scenario, log, decisions })
    }

    pub fn audit(&self, checks: &AuditChecks) -> Vec<FairnessViolation> {
        let s = &self.scenario;
        audit_log(&self.log, &self.decisions, checks, s.nodes, s.faults, &s.adversary.honest_nodes(s.nodes))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub nodes: usize,
    pub mode: Mode,
    pub rep: usize,
    pub mean_latency_us: f64,
    pub median_latency_us: Micros,
    pub p99_latency_us: Micros,
    pub throughput: f64,
    pub rounds_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub nodes: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    /// `|optimized − original| / original`.
    pub throughput_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub reductions: Vec<Reduction>,
}

/// Largest `f` that both consensus (`3f + 1 ≤ n`) and the rule tolerate at `n` nodes.
pub fn max_faults(rule: &RuleConfig, nodes: usize) -> usize {
    (0..nodes).take_while(|&f| 3 * f < nodes && rule.fault_bound(f).is_ok_and(|b| b <= nodes)).last().unwrap_or(0)
}

/// The base scenario at `n` nodes with [`max_faults`] faults.
pub fn sweep_point(base: &Scenario, nodes: usize, mode: Mode, rep: usize) -> Scenario {
    let mut s = base.clone();
    s.nodes = nodes;
    s.faults = max_faults(&s.rule, nodes);
    s.mode = mode;
    s.seed = base.seed.wrapping_add(rep as u64);
    s
}

/// Both modes at every node count, `reps` seeded repetitions each.
pub fn compare(base: &Scenario, nodes: &[usize], reps: usize) -> Result<Comparison, ScenarioError> {
    let jobs: Vec<(usize, Mode, usize)> = nodes
        .iter()
        .flat_map(|&n| {
            [Mode::Original, Mode::Optimized].into_iter().flat_map(move |m| (0..reps).map(move |r| (n, m, r)))
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, mode, rep)| {
            let sim = sweep_point(base, n, mode, rep).simulate()?;
            let p = &sim.perf;
            Ok(ComparisonRow {
                nodes: n,
                mode,
                rep,
                mean_latency_us: p.mean_latency_us.unwrap_or(f64::NAN),
                median_latency_us: p.median_latency_us.unwrap_or(0),
                p99_latency_us: p.p99_latency_us.unwrap_or(0),
                throughput: p.throughput,
                rounds_failed: p.rounds_failed,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let average = |n: usize, mode: Mode, f: &dyn Fn(&ComparisonRow) -> f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.nodes == n && r.mode == mode).map(f).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let reductions = nodes
        .iter()
        .map(|&n| {
            let red = |f: &dyn Fn(&ComparisonRow) -> f64| {
                1.0 - average(n, Mode::Optimized, f) / average(n, Mode::Original, f)
            };
            let tp = |m| average(n, m, &|r| r.throughput);
            Reduction {
                nodes: n,
                mean: red(&|r| r.mean_latency_us),
                median: red(&|r| r.median_latency_us as f64),
                p99: red(&|r| r.p99_latency_us as f64),
                throughput_delta: (tp(Mode::Optimized) - tp(Mode::Original)).abs() / tp(Mode::Original),
            }
        })
        .collect();
    Ok(Comparison { rows, reductions })
}

impl Comparison {
    pub fn reduction(&self, nodes: usize) -> Option<&Reduction> {
        self.reductions.iter().find(|r| r.nodes == nodes)
    }

    pub fn mean_latency(&self, nodes: usize, mode: Mode) -> f64 {
        let v: Vec<f64> =
            self.rows.iter().filter(|r| r.nodes == nodes && r.mode == mode).map(|r| r.mean_latency_us).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "nodes",
            "mode",
            "rep",
            "mean_latency_us",
            "median_latency_us",
            "p99_latency_us",
            "throughput",
        ])?;
        for red in &self.reductions {
            for r in self.rows.iter().filter(|r| r.nodes == red.nodes) {
                let mode = match r.mode {
                    Mode::Original => "original",
                    Mode::Optimized => "optimized",
                };
                w.write_record([
                    r.nodes.to_string(),
                    mode.into(),
                    r.rep.to_string(),
                    format!("{:.1}", r.mean_latency_us),
                    r.median_latency_us.to_string(),
                    r.p99_latency_us.to_string(),
                    format!("{:.3}", r.throughput),
                ])?;
            }
            w.write_record([
                red.nodes.to_string(),
                "reduction".into(),
                String::new(),
                format!("{:.4}", red.mean),
                format!("{:.4}", red.median),
                format!("{:.4}", red.p99),
                format!("{:.4}", red.throughput_delta),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
