//! Post-hoc auditing of committed logs against ground truth, and performance
//! metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::consensus::{DecisionLog, Round};
use crate::factory::{RoundTrace, SimulationOutput, Stage};
use crate::ids::{MessageId, NodeId};
use crate::ordering::{ceil_frac, is_f_robust, OrderedOutput, Timestamp};
use crate::simnet::{Micros, ReceptionLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    GammaBatch,
    MedianRobust,
    PermutationBias,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::GammaBatch => "gamma_batch",
            ViolationKind::MedianRobust => "median_robust",
            ViolationKind::PermutationBias => "permutation_bias",
        }
    }
}

/// `pair.0` was owed precedence over `pair.1` and did not get it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessViolation {
    pub kind: ViolationKind,
    pub pair: (MessageId, MessageId),
    pub evidence: String,
}

/// A committed log reduced to what auditing needs.
pub type Committed = [(Round, OrderedOutput)];

pub fn committed(decisions: &DecisionLog) -> Vec<(Round, OrderedOutput)> {
    decisions.entries().iter().map(|d| (d.round, d.output.clone())).collect()
}

/// Committed position of each message: `(round, batch index)`.
pub fn positions(decisions: &Committed) -> BTreeMap<MessageId, (Round, usize)> {
    let mut out = BTreeMap::new();
    for (round, output) in decisions {
        for (b, batch) in output.batches().iter().enumerate() {
            for m in batch {
                out.insert(*m, (*round, b));
            }
        }
    }
    out
}

/// Honest nodes that received `a` strictly before `b` (never receiving `b`
/// counts as later).
pub fn supporters(log: &ReceptionLog, honest: &BTreeSet<NodeId>, a: &MessageId, b: &MessageId) -> usize {
    honest.iter().filter(|h| log.received_before(**h, a, b)).count()
}

/// Pairs `(m1, m2)` of committed messages where at least `⌈γ·|honest|⌉`
/// honest nodes received `m1` first yet `m1` was committed strictly later.
pub fn check_gamma_fairness(
    log: &ReceptionLog,
    decisions: &Committed,
    gamma: f64,
    honest: &BTreeSet<NodeId>,
) -> Vec<FairnessViolation> {
    let need = ceil_frac(gamma * honest.len() as f64).max(1);
    let pos = positions(decisions);
    let mut order: Vec<(MessageId, (Round, usize))> = pos.iter().map(|(m, p)| (*m, *p)).collect();
    order.sort_by_key(|(m, p)| (*p, *m));
    let arrivals: Vec<Vec<Micros>> =
        order.iter().map(|(m, _)| honest.iter().map(|h| log.arrival(*h, m).unwrap_or(Micros::MAX)).collect()).collect();
    // A pair can only reach `need` supporters if the need-th arrival of the
    // first message precedes the last arrival of the second.
    let kth: Vec<Micros> = arrivals
        .iter()
        .map(|a| {
            let mut s = a.clone();
            s.sort_unstable();
            s.get(need - 1).copied().unwrap_or(Micros::MAX)
        })
        .collect();
    let last: Vec<Micros> = arrivals.iter().map(|a| a.iter().copied().max().unwrap_or(Micros::MAX)).collect();
    let mut out = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if order[j].1 == order[i].1 || kth[j] == Micros::MAX || kth[j] >= last[i] {
                continue;
            }
            let count = arrivals[j].iter().zip(&arrivals[i]).filter(|(a, b)| *a != &Micros::MAX && a < b).count();
            if count >= need {
                let (m1, p1) = order[j];
                let (m2, p2) = order[i];
                out.push(FairnessViolation {
                    kind: ViolationKind::GammaBatch,
                    pair: (m1, m2),
                    evidence: format!(
                        "{count}/{} honest received first (need {need}); committed at round {} batch {} after round {} batch {}",
                        honest.len(),
                        p1.0,
                        p1.1,
                        p2.0,
                        p2.1
                    ),
                });
            }
        }
    }
    out
}

/// Independent recheck of a gamma violation straight from the raw logs.
pub fn reverify_gamma(
    v: &FairnessViolation,
    log: &ReceptionLog,
    decisions: &Committed,
    gamma: f64,
    honest: &BTreeSet<NodeId>,
) -> bool {
    let (a, b) = v.pair;
    let order: Vec<(Round, usize)> = [a, b]
        .iter()
        .map(|m| {
            decisions
                .iter()
                .find_map(|(r, o)| o.batches().iter().position(|bt| bt.contains(m)).map(|i| (*r, i)))
                .unwrap_or((Round::MAX, usize::MAX))
        })
        .collect();
    let count = supporters(log, honest, &a, &b) as f64;
    v.kind == ViolationKind::GammaBatch && count >= (gamma * honest.len() as f64 - 1e-9).ceil() && order[0] > order[1]
}

fn ground_truth_times(log: &ReceptionLog, id: &MessageId, n: usize) -> Vec<Timestamp> {
    (0..n as u32).map(|i| log.arrival(NodeId(i), id).map_or(Timestamp::INFINITY, Timestamp)).collect()
}

/// Adjacent committed pairs `(x, y)` whose true readings make `y` f-robustly
/// earlier than `x`. Reversals of non-robust pairs are outside the guarantee
/// and are not reported.
pub fn check_median_robust(log: &ReceptionLog, decisions: &Committed, n: usize, f: usize) -> Vec<FairnessViolation> {
    let mut out = Vec::new();
    for (round, output) in decisions {
        let flat = output.flatten();
        for w in flat.windows(2) {
            let (x, y) = (w[0], w[1]);
            let (tx, ty) = (ground_truth_times(log, &x, n), ground_truth_times(log, &y, n));
            if let Ok(true) = is_f_robust(&ty, &tx, n, f) {
                out.push(FairnessViolation {
                    kind: ViolationKind::MedianRobust,
                    pair: (y, x),
                    evidence: format!("round {round}: {y} is {f}-robustly earlier than {x} but was committed after it"),
                });
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("run {0} is not a permutation of the first run's message set")]
    InconsistentRuns(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub runs: usize,
    /// Present when `|S| ≤ 5`.
    pub chi_square: Option<f64>,
    pub degrees_of_freedom: Option<usize>,
    pub p_value: Option<f64>,
    /// Empirical `Pr[a before b]` for every `a < b`.
    pub pairwise: Vec<((MessageId, MessageId), f64)>,
    /// Fewer than 1,000 runs.
    pub low_power: bool,
}

impl UniformityReport {
    pub fn max_pair_deviation(&self) -> f64 {
        self.pairwise.iter().map(|(_, p)| (p - 0.5).abs()).fold(0.0, f64::max)
    }

    /// Uniform at level `alpha` with every pairwise frequency within `band` of ½.
    pub fn accepts(&self, alpha: f64, band: f64) -> bool {
        self.p_value.is_none_or(|p| p > alpha) && self.max_pair_deviation() <= band
    }

    pub fn violations(&self, band: f64) -> Vec<FairnessViolation> {
        self.pairwise
            .iter()
            .filter(|(_, p)| (p - 0.5).abs() > band)
            .map(|(pair, p)| FairnessViolation {
                kind: ViolationKind::PermutationBias,
                pair: if *p >= 0.5 { *pair } else { (pair.1, pair.0) },
                evidence: format!("Pr[{} before {}] = {p:.4} over {} runs", pair.0, pair.1, self.runs),
            })
            .collect()
    }
}

// Lexicographic rank of a permutation of 0..k.
fn permutation_rank(perm: &[usize]) -> usize {
    let k = perm.len();
    let mut rank = 0;
    for i in 0..k {
        let smaller = perm[i + 1..].iter().filter(|&&x| x < perm[i]).count();
        rank = rank * (k - i) + smaller;
    }
    rank
}

pub fn check_permutation_uniformity(runs: &[Vec<MessageId>]) -> Result<UniformityReport, AuditError> {
    let ids: Vec<MessageId> = runs
        .first()
        .map(|r| {
            let mut v = r.clone();
            v.sort();
            v
        })
        .unwrap_or_default();
    let k = ids.len();
    let mut ranks = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let mut sorted = run.clone();
        sorted.sort();
        if sorted != ids {
            return Err(AuditError::InconsistentRuns(i));
        }
        ranks.push(run.iter().map(|m| ids.binary_search(m).expect("same set")).collect::<Vec<usize>>());
    }
    let total = runs.len().max(1) as f64;
    let mut pairwise = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let before =
                ranks.iter().filter(|p| p.iter().position(|&x| x == a) < p.iter().position(|&x| x == b)).count();
            pairwise.push(((ids[a], ids[b]), before as f64 / total));
        }
    }
    let (mut chi_square, mut dof, mut p_value) = (None, None, None);
    if (2..=5).contains(&k) && !runs.is_empty() {
        let cells: usize = (1..=k).product();
        let mut counts = vec![0usize; cells];
        for p in &ranks {
            counts[permutation_rank(p)] += 1;
        }
        let expected = runs.len() as f64 / cells as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
        chi_square = Some(stat);
        dof = Some(cells - 1);
        p_value = Some(1.0 - dist.cdf(stat));
    }
    Ok(UniformityReport {
        runs: runs.len(),
        chi_square,
        degrees_of_freedom: dof,
        p_value,
        pairwise,
        low_power: runs.len() < 1_000,
    })
}

/// Where one committed message's latency went.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyAccount {
    pub sent_us: Micros,
    pub first_arrival_us: Micros,
    pub round: Round,
    pub round_start_us: Micros,
    pub synced_us: Micros,
    pub executed_us: Micros,
    pub committed_us: Micros,
}

impl LatencyAccount {
    pub fn latency_us(&self) -> Micros {
        self.committed_us - self.sent_us
    }

    /// Signed durations of the consecutive stages: client hop, pool wait,
    /// synchronization, execution, then verification, voting and certification.
    pub fn stages(&self) -> [i64; 5] {
        let t = [
            self.sent_us,
            self.first_arrival_us,
            self.round_start_us,
            self.synced_us,
            self.executed_us,
            self.committed_us,
        ];
        let mut out = [0i64; 5];
        for i in 0..5 {
            out[i] = t[i + 1] as i64 - t[i] as i64;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub committed: usize,
    pub mean_latency_us: Option<f64>,
    pub median_latency_us: Option<Micros>,
    pub p99_latency_us: Option<Micros>,
    /// Committed messages per simulated second.
    pub throughput: f64,
    pub rounds_committed: usize,
    pub rounds_failed: usize,
    pub accounts: BTreeMap<MessageId, LatencyAccount>,
}

impl PerfReport {
    /// Every latency equals the sum of its stage durations, and no stage
    /// after the pool wait runs backwards.
    pub fn accounting_holds(&self) -> bool {
        self.accounts.values().all(|a| {
            let s = a.stages();
            s.iter().sum::<i64>() == a.latency_us() as i64 && s[0] >= 0 && s[2..].iter().all(|x| *x >= 0)
        })
    }
}

fn nearest_rank(sorted: &[Micros], q: f64) -> Micros {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn perf_report(traces: &[RoundTrace], log: &ReceptionLog, duration_us: Micros) -> PerfReport {
    let mut accounts = BTreeMap::new();
    for t in traces {
        let (Some(d), Some(committed_us)) = (&t.committed, t.commit_time()) else { continue };
        let round_start_us = t.first(Stage::RoundStart).unwrap_or(committed_us);
        let synced_us = t.first(Stage::Synced).unwrap_or(round_start_us);
        let executed_us = t.first(Stage::Executed).unwrap_or(synced_us).max(synced_us);
        for m in d.output.flatten() {
            let Some(sent_us) = log.sent(&m) else { continue };
            let first_arrival_us = log.first_arrival(&m).unwrap_or(round_start_us);
            accounts.insert(
                m,
                LatencyAccount {
                    sent_us,
                    first_arrival_us,
                    round: t.round,
                    round_start_us,
                    synced_us,
                    executed_us,
                    committed_us,
                },
            );
        }
    }
    let mut lat: Vec<Micros> = accounts.values().map(|a| a.latency_us()).collect();
    lat.sort_unstable();
    let committed = lat.len();
    PerfReport {
        committed,
        mean_latency_us: (!lat.is_empty()).then(|| lat.iter().sum::<Micros>() as f64 / committed as f64),
        median_latency_us: (!lat.is_empty()).then(|| nearest_rank(&lat, 0.5)),
        p99_latency_us: (!lat.is_empty()).then(|| nearest_rank(&lat, 0.99)),
        throughput: if duration_us == 0 { 0.0 } else { committed as f64 / (duration_us as f64 / 1e6) },
        rounds_committed: traces.iter().filter(|t| t.committed.is_some()).count(),
        rounds_failed: traces.iter().filter(|t| t.committed.is_none() && t.first(Stage::TimedOut).is_some()).count(),
        accounts,
    }
}

/// Convenience: the performance report of a whole simulation.
pub fn simulation_perf(out: &SimulationOutput, duration_us: Micros) -> PerfReport {
    perf_report(&out.traces, &out.log, duration_us)
}
